//! Reference out-of-model ranker: folds per-object metrics into a single
//! desirability index and emits a [`FiltrationList`].
//!
//! ```text
//! score = w_nps·n(nps) + w_time·(1 − n(time)) + w_review·n(review) + w_prox·(1 − n(prox))
//! ```
//!
//! where `n` is min-max normalization clamped to `[0, 1]`. Response time and
//! proximity are costs, so they are inverted.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{EvaluatorError, FiltrationList};

#[derive(Debug, Error)]
pub enum RecommenderError {
    #[error("invalid bounds for {metric}: min {min} must be below max {max}")]
    InvalidBounds { metric: &'static str, min: f64, max: f64 },
    #[error("weights must be non-negative and sum to 1, got {0:?}")]
    InvalidWeights([f64; 4]),
    #[error("object {object_key:?}: {metric} = {value} is out of range")]
    InvalidMetric {
        object_key: String,
        metric: &'static str,
        value: f64,
    },
    #[error("duplicate object key {0:?}")]
    DuplicateKey(String),
    #[error("metrics file is missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("metrics file: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Filtration(#[from] EvaluatorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub object_key: String,
    pub nps: f64,
    pub response_time_min: f64,
    pub review_score: f64,
    pub proximity_km: f64,
}

impl MetricRecord {
    pub fn validate(&self) -> Result<(), RecommenderError> {
        let checks: [(&'static str, f64, bool); 4] = [
            ("nps", self.nps, (-100.0..=100.0).contains(&self.nps)),
            ("response_time_min", self.response_time_min, self.response_time_min > 0.0),
            ("review_score", self.review_score, (0.0..=5.0).contains(&self.review_score)),
            ("proximity_km", self.proximity_km, self.proximity_km >= 0.0),
        ];
        for (metric, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(RecommenderError::InvalidMetric {
                    object_key: self.object_key.clone(),
                    metric,
                    value,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricWeights {
    pub nps: f64,
    pub time: f64,
    pub review: f64,
    pub proximity: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            nps: 0.25,
            time: 0.25,
            review: 0.25,
            proximity: 0.25,
        }
    }
}

impl MetricWeights {
    pub fn validate(&self) -> Result<(), RecommenderError> {
        let w = [self.nps, self.time, self.review, self.proximity];
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(RecommenderError::InvalidWeights(w));
        }
        Ok(())
    }
}

/// `[min, max]` normalization range for one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for Range {
    fn from([min, max]: [f64; 2]) -> Self {
        Self { min, max }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.min, r.max]
    }
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn normalize(&self, v: f64) -> f64 {
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricBounds {
    pub nps: Range,
    pub time: Range,
    pub review: Range,
    pub proximity: Range,
}

impl Default for MetricBounds {
    fn default() -> Self {
        Self {
            nps: Range::new(-100.0, 100.0),
            time: Range::new(10.0, 60.0),
            review: Range::new(0.0, 5.0),
            proximity: Range::new(0.0, 10.0),
        }
    }
}

impl MetricBounds {
    pub fn validate(&self) -> Result<(), RecommenderError> {
        for (metric, r) in [
            ("nps", self.nps),
            ("time", self.time),
            ("review", self.review),
            ("proximity", self.proximity),
        ] {
            if !(r.min.is_finite() && r.max.is_finite() && r.min < r.max) {
                return Err(RecommenderError::InvalidBounds {
                    metric,
                    min: r.min,
                    max: r.max,
                });
            }
        }
        Ok(())
    }
}

/// Desirability index of one object, in `[0, 1]`.
pub fn desirability(m: &MetricRecord, w: &MetricWeights, bounds: &MetricBounds) -> Result<f64, RecommenderError> {
    bounds.validate()?;
    Ok(w.nps * bounds.nps.normalize(m.nps)
        + w.time * (1.0 - bounds.time.normalize(m.response_time_min))
        + w.review * bounds.review.normalize(m.review_score)
        + w.proximity * (1.0 - bounds.proximity.normalize(m.proximity_km)))
}

/// Scores and ranks every record.
pub fn build_filtration(
    records: &[MetricRecord],
    w: &MetricWeights,
    bounds: &MetricBounds,
) -> Result<FiltrationList, RecommenderError> {
    w.validate()?;
    bounds.validate()?;
    let mut seen = HashSet::new();
    let mut scored = Vec::with_capacity(records.len());
    for r in records {
        r.validate()?;
        if !seen.insert(r.object_key.as_str()) {
            return Err(RecommenderError::DuplicateKey(r.object_key.clone()));
        }
        scored.push((r.object_key.clone(), desirability(r, w, bounds)?));
    }
    FiltrationList::from_scores(scored).map_err(|e| match e {
        EvaluatorError::DuplicateKey(k) => RecommenderError::DuplicateKey(k),
        other => other.into(),
    })
}

pub const METRIC_COLUMNS: [&str; 5] = ["object_key", "nps", "response_time_min", "review_score", "proximity_km"];

/// Reads the metrics CSV (`object_key,nps,response_time_min,review_score,proximity_km`).
pub fn read_metrics_csv(reader: impl Read) -> Result<Vec<MetricRecord>, RecommenderError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if let Some(missing) = METRIC_COLUMNS.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        return Err(RecommenderError::MissingColumn(missing));
    }
    rdr.deserialize().map(|r| r.map_err(RecommenderError::from)).collect()
}
