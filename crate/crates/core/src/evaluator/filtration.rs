//! The out-of-model ranking the evaluator compares against.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::EvaluatorError;
use crate::text::canonical_key;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationEntry {
    pub object_key: String,
    pub score: f64,
    pub rank: usize,
}

/// Entries sorted by descending score, ties by ascending key, ranked `1..=N`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FiltrationList {
    entries: Vec<FiltrationEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    object_key: String,
    score: f64,
    // rank is written by `to_json` for readers; it is recomputed on ingest
    #[serde(default)]
    #[allow(dead_code)]
    rank: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    entries: Vec<RawEntry>,
}

impl FiltrationList {
    /// Ranks `(object_key, score)` pairs. Input order does not matter.
    ///
    /// Keys are compared after canonicalization, so `"Gio's"` and `" gio's"`
    /// count as duplicates.
    pub fn from_scores<I, K>(scores: I) -> Result<Self, EvaluatorError>
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for (key, score) in scores {
            let object_key = key.into();
            if !score.is_finite() {
                return Err(EvaluatorError::NonFiniteScore { object_key });
            }
            if !seen.insert(canonical_key(&object_key)) {
                return Err(EvaluatorError::DuplicateKey(object_key));
            }
            entries.push(FiltrationEntry {
                object_key,
                score,
                rank: 0,
            });
        }
        if entries.is_empty() {
            log::warn!("filtration list is empty; every chunk will be unmatched");
        }
        entries.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.object_key.cmp(&b.object_key))
        });
        for (i, e) in entries.iter_mut().enumerate() {
            e.rank = i + 1;
        }
        Ok(Self { entries })
    }

    /// Parses the filtration file format `{"entries": [{"object_key", "score"}]}`.
    pub fn from_json(raw: &str) -> Result<Self, EvaluatorError> {
        let file: RawFile = serde_json::from_str(raw).map_err(|e| EvaluatorError::Parse(e.to_string()))?;
        Self::from_scores(file.entries.into_iter().map(|e| (e.object_key, e.score)))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("filtration list serializes");
        s.push('\n');
        s
    }

    pub fn entries(&self) -> &[FiltrationEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Min-max normalized score of `entry`; a list with no spread maps to 1.0.
    pub fn normalized(&self, score: f64) -> f64 {
        let (Some(first), Some(last)) = (self.entries.first(), self.entries.last()) else {
            return 1.0;
        };
        let (max, min) = (first.score, last.score);
        if max > min {
            ((score - min) / (max - min)).clamp(0.0, 1.0)
        } else {
            1.0
        }
    }
}
