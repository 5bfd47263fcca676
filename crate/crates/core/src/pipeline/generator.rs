//! Answer generators.
//!
//! The default [`TemplateGenerator`] is deterministic and cites every
//! evidence item by hash. [`RemoteGenerator`] posts the query and evidence to
//! a service: `POST {"query", "evidence": [{"hash", "object_key", "body"}]} -> {"answer"}`.

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::EvaluatedHit;

pub const GEN_URL_ENV: &str = "COMPRAG_GEN_URL";

/// Returned whenever no evidence survives evaluation.
pub const NO_SUPPORTED_ANSWER: &str = "No supported answer: no retrieved chunk-object passed evaluation.";

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),
}

/// One evaluated hit together with the chunk text it refers to.
#[derive(Debug, Clone, Copy)]
pub struct Evidence<'a> {
    pub hit: &'a EvaluatedHit,
    pub body: &'a str,
}

pub trait Generator: Send + Sync {
    /// Produces an answer that cites evidence only by the hashes it was given.
    fn generate(&self, query: &str, evidence: &[Evidence<'_>]) -> Result<String, GenerateError>;
}

/// Deterministic listing of the evidence in order.
pub fn template_generate(_query: &str, evidence: &[EvaluatedHit]) -> String {
    if evidence.is_empty() {
        return NO_SUPPORTED_ANSWER.to_string();
    }
    let mut out = format!("Top {} result(s), best first:\n", evidence.len());
    for h in evidence {
        let _ = writeln!(
            out,
            "{}. {} [{}] fused={:.4} semantic={:.4}",
            h.final_rank, h.object_key, h.chunk_hash, h.fused, h.semantic
        );
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

impl Generator for TemplateGenerator {
    fn generate(&self, query: &str, evidence: &[Evidence<'_>]) -> Result<String, GenerateError> {
        let hits: Vec<EvaluatedHit> = evidence.iter().map(|e| e.hit.clone()).collect();
        Ok(template_generate(query, &hits))
    }
}

#[derive(Serialize)]
struct WireEvidence<'a> {
    hash: &'a str,
    object_key: &'a str,
    body: &'a str,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    query: &'a str,
    evidence: Vec<WireEvidence<'a>>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    answer: String,
}

#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteGenerator {
    pub fn new(url: impl Into<String>) -> Result<Self, GenerateError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GenerateError::GeneratorUnavailable(e.to_string()))?;
        Ok(Self { url: url.into(), client })
    }

    /// Endpoint from `COMPRAG_GEN_URL`, if set.
    pub fn from_env() -> Option<Result<Self, GenerateError>> {
        std::env::var(GEN_URL_ENV).ok().map(Self::new)
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, query: &str, evidence: &[Evidence<'_>]) -> Result<String, GenerateError> {
        let request = GenerateRequest {
            query,
            evidence: evidence
                .iter()
                .map(|e| WireEvidence {
                    hash: &e.hit.chunk_hash,
                    object_key: &e.hit.object_key,
                    body: e.body,
                })
                .collect(),
        };
        let unavailable = |e: reqwest::Error| GenerateError::GeneratorUnavailable(format!("{}: {e}", self.url));
        let response: GenerateResponse = self
            .client
            .post(&self.url)
            .json(&request)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(unavailable)?
            .json()
            .map_err(unavailable)?;
        Ok(response.answer)
    }
}
