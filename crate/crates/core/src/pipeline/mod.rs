//! Query → retrieve → correlate → evaluate → generate.

mod generator;

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generator::{
    template_generate, Evidence, GenerateError, Generator, RemoteGenerator, TemplateGenerator, GEN_URL_ENV,
    NO_SUPPORTED_ANSWER,
};

use crate::evaluator::{cited_hashes, correlate, evaluate, EvaluatedHit, EvaluatorError, EvaluatorPolicy, FiltrationList};
use crate::exec::Execution;
use crate::index::{CorpusIndex, EmbedError, Embedder, IndexError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Evaluator(#[from] EvaluatorError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("generator cited {0} which is not in the evidence")]
    UngroundedAnswer(String),
}

impl PipelineError {
    /// True for failures of an external embedding or generation service.
    pub fn is_remote_failure(&self) -> bool {
        matches!(
            self,
            PipelineError::Generate(_)
                | PipelineError::UngroundedAnswer(_)
                | PipelineError::Index(IndexError::Embed(
                    EmbedError::EmbedderUnavailable(_) | EmbedError::DimensionMismatch { .. }
                ))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub query_text: String,
    /// Retrieval depth.
    pub k: usize,
    pub policy: EvaluatorPolicy,
}

impl QueryRequest {
    pub fn new(query_text: impl Into<String>, k: usize, policy: EvaluatorPolicy) -> Self {
        Self {
            query_text: query_text.into(),
            k,
            policy,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.query_text.trim().is_empty() {
            return Err(PipelineError::InvalidRequest("query text is empty".into()));
        }
        if self.k == 0 {
            return Err(PipelineError::InvalidRequest("k must be at least 1".into()));
        }
        self.policy.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UnmatchedReport {
    /// Chunks in the index with no filtration entry.
    pub unmatched_hashes: usize,
    /// Filtration objects with no chunk in the index.
    pub unmatched_keys: Vec<String>,
    /// Retrieved hits whose object had no filtration entry.
    pub retrieved_unmatched: Vec<String>,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub retrieve_ms: f64,
    pub correlate_ms: f64,
    pub evaluate_ms: f64,
    pub generate_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerBundle {
    pub answer_text: String,
    pub evidence: Vec<EvaluatedHit>,
    pub unmatched_report: UnmatchedReport,
    pub timings: StageTimings,
}

impl AnswerBundle {
    /// Cited hashes that are missing from the evidence; empty for a grounded answer.
    pub fn ungrounded_citations(&self) -> Vec<String> {
        let known: HashSet<&str> = self.evidence.iter().map(|e| e.chunk_hash.as_str()).collect();
        cited_hashes(&self.answer_text)
            .into_iter()
            .filter(|h| !known.contains(h.as_str()))
            .collect()
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Embedder and generator shared across requests.
#[derive(Clone)]
pub struct Pipeline {
    embedder: Arc<dyn Embedder>,
    generator: Arc<dyn Generator>,
    exec: Execution,
}

impl Pipeline {
    /// Pipeline with the deterministic template generator.
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            embedder,
            generator: Arc::new(TemplateGenerator),
            exec: Execution::default(),
        }
    }

    pub fn with_generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn answer(
        &self,
        index: &CorpusIndex,
        flist: &FiltrationList,
        req: &QueryRequest,
    ) -> Result<AnswerBundle, PipelineError> {
        req.validate()?;
        let started = Instant::now();
        let mut timings = StageTimings::default();

        let t = Instant::now();
        let hits = index.retrieve_with(self.embedder.as_ref(), &req.query_text, req.k, self.exec)?;
        timings.retrieve_ms = elapsed_ms(t);

        let t = Instant::now();
        let cmap = correlate(index, flist);
        timings.correlate_ms = elapsed_ms(t);

        let t = Instant::now();
        let evidence = evaluate(&hits, &cmap, flist, &req.policy)?;
        timings.evaluate_ms = elapsed_ms(t);

        let t = Instant::now();
        let answer_text = if evidence.is_empty() {
            NO_SUPPORTED_ANSWER.to_string()
        } else {
            let items: Vec<Evidence<'_>> = evidence
                .iter()
                .map(|hit| Evidence {
                    hit,
                    body: index.get(&hit.chunk_hash).map_or("", |e| e.chunk.body.as_str()),
                })
                .collect();
            self.generator.generate(&req.query_text, &items)?
        };
        timings.generate_ms = elapsed_ms(t);
        timings.total_ms = elapsed_ms(started);

        let unmatched_report = UnmatchedReport {
            unmatched_hashes: cmap.unmatched_hashes.len(),
            unmatched_keys: cmap.unmatched_keys.iter().cloned().collect(),
            retrieved_unmatched: hits
                .iter()
                .filter(|h| cmap.unmatched_hashes.contains(&h.chunk_hash))
                .map(|h| h.chunk_hash.clone())
                .collect(),
        };
        let bundle = AnswerBundle {
            answer_text,
            evidence,
            unmatched_report,
            timings,
        };
        if let Some(bad) = bundle.ungrounded_citations().into_iter().next() {
            return Err(PipelineError::UngroundedAnswer(bad));
        }
        Ok(bundle)
    }
}
