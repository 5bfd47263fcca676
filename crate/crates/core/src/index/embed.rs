//! Text embedders.
//!
//! [`HashingEmbedder`] is the default: term frequencies folded into `dim`
//! buckets by FNV-1a, optionally L2-normalized. [`BagOfWordsEmbedder`] keeps
//! one dimension per vocabulary term and exists so tests can reason about
//! exact overlaps. [`RemoteEmbedder`] speaks the JSON wire protocol
//! `POST {"texts": [..]} -> {"vectors": [[..]]}`.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;
use crate::text::terms;

pub const DEFAULT_DIM: usize = 256;
pub const EMBED_URL_ENV: &str = "COMPRAG_EMBED_URL";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(values: &mut [f64]) {
    let n = l2_norm(values);
    if n > 0.0 {
        values.iter_mut().for_each(|v| *v /= n);
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Identifies the configuration; indexes built under one fingerprint are
    /// rejected by embedders with another.
    fn fingerprint(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[&str], exec: Execution) -> Result<Vec<EmbeddingVector>, EmbedError> {
        exec.try_map(texts, |t| self.embed(t))
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
    unit_norm: bool,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            unit_norm: true,
        }
    }
}

impl HashingEmbedder {
    /// Panics if `dim` is zero.
    pub fn new(dim: usize, unit_norm: bool) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, unit_norm }
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("hashing-tf/fnv1a64/dim={}/unit_norm={}", self.dim, self.unit_norm)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut values = vec![0.0; self.dim];
        for term in terms(text) {
            values[(fnv1a64(term.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        if self.unit_norm {
            normalize(&mut values);
        }
        Ok(EmbeddingVector { values })
    }
}

/// Exact bag-of-words over a fixed vocabulary; out-of-vocabulary terms are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagOfWordsEmbedder {
    vocab: BTreeMap<String, usize>,
    unit_norm: bool,
}

impl BagOfWordsEmbedder {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>, unit_norm: bool) -> Self {
        let mut words: Vec<String> = texts.into_iter().flat_map(terms).collect();
        words.sort();
        words.dedup();
        let vocab = words.into_iter().enumerate().map(|(i, w)| (w, i)).collect();
        Self { vocab, unit_norm }
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.vocab.keys().map(String::as_str)
    }
}

impl Embedder for BagOfWordsEmbedder {
    fn dim(&self) -> usize {
        self.vocab.len().max(1)
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for word in self.vocab.keys() {
            h.update((word.len() as u64).to_le_bytes());
            h.update(word.as_bytes());
        }
        format!(
            "bag-of-words/vocab={}/unit_norm={}",
            hex::encode(&h.finalize()[..8]),
            self.unit_norm
        )
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut values = vec![0.0; self.dim()];
        for term in terms(text) {
            if let Some(&i) = self.vocab.get(&term) {
                values[i] += 1.0;
            }
        }
        if self.unit_norm {
            normalize(&mut values);
        }
        Ok(EmbeddingVector { values })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for an embedding service speaking the JSON wire protocol.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    url: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, dim: usize) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| EmbedError::EmbedderUnavailable(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            dim,
            client,
        })
    }

    /// Endpoint from `COMPRAG_EMBED_URL`, if set.
    pub fn from_env(dim: usize) -> Option<Result<Self, EmbedError>> {
        std::env::var(EMBED_URL_ENV).ok().map(|url| Self::new(url, dim))
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let unavailable = |e: reqwest::Error| EmbedError::EmbedderUnavailable(format!("{}: {e}", self.url));
        let response: EmbedResponse = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(unavailable)?
            .json()
            .map_err(unavailable)?;
        if response.vectors.len() != texts.len() {
            return Err(EmbedError::EmbedderUnavailable(format!(
                "{}: sent {} texts, received {} vectors",
                self.url,
                texts.len(),
                response.vectors.len()
            )));
        }
        response
            .vectors
            .into_iter()
            .map(|values| {
                if values.len() != self.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.dim,
                        got: values.len(),
                    });
                }
                EmbeddingVector::new(values)
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("remote/{}/dim={}", self.url, self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        Ok(self.request(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str], _exec: Execution) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.request(texts)
    }
}
