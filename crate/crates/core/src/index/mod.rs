//! Embedded chunk store with exhaustive cosine top-k retrieval.

mod embed;
mod persist;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{
    fnv1a64, BagOfWordsEmbedder, EmbedError, Embedder, EmbeddingVector, HashingEmbedder, RemoteEmbedder,
    DEFAULT_DIM, EMBED_URL_ENV,
};
pub use persist::{INDEX_MAGIC, INDEX_VERSION};

use crate::chunker::{validate_relevance, ChunkObject, RelevanceViolation};
use crate::exec::Execution;
use embed::l2_norm;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("duplicate chunk hash {0}")]
    DuplicateHash(String),
    #[error("{} chunk-property relevance violation(s)", .0.len())]
    RelevanceViolation(Vec<RelevanceViolation>),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index was built with embedder {found:?}, active embedder is {expected:?}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A chunk and its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk: ChunkObject,
    pub vector: EmbeddingVector,
    norm: f64,
}

impl IndexEntry {
    fn new(chunk: ChunkObject, vector: EmbeddingVector) -> Self {
        let norm = vector.norm();
        Self { chunk, vector, norm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticHit {
    pub chunk_hash: String,
    pub object_key: String,
    pub similarity: f64,
}

/// Immutable corpus of embedded chunk-objects, ordered by hash.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    fingerprint: String,
    dim: usize,
    entries: Vec<IndexEntry>,
}

/// Cosine similarity clamped to `[-1, 1]`; zero vectors score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    cosine_with_norms(a, l2_norm(a), b, l2_norm(b))
}

fn cosine_with_norms(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // + 0.0 folds a negative zero so ties compare equal
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0) + 0.0
}

/// Descending similarity, then ascending hash.
pub fn hit_order(a: &SemanticHit, b: &SemanticHit) -> Ordering {
    b.similarity
        .partial_cmp(&a.similarity)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.chunk_hash.cmp(&b.chunk_hash))
}

impl CorpusIndex {
    pub fn empty(embedder: &dyn Embedder) -> Self {
        Self {
            fingerprint: embedder.fingerprint(),
            dim: embedder.dim(),
            entries: Vec::new(),
        }
    }

    /// Embeds and stores `chunks`. The chunks must have a clean relevance report.
    pub fn build(chunks: Vec<ChunkObject>, embedder: &dyn Embedder) -> Result<Self, IndexError> {
        Self::build_with(chunks, embedder, Execution::default())
    }

    pub fn build_with(
        chunks: Vec<ChunkObject>,
        embedder: &dyn Embedder,
        exec: Execution,
    ) -> Result<Self, IndexError> {
        let violations = validate_relevance(&chunks);
        if !violations.is_empty() {
            return Err(IndexError::RelevanceViolation(violations));
        }
        let mut seen = HashSet::with_capacity(chunks.len());
        if let Some(dup) = chunks.iter().find(|c| !seen.insert(c.hash.as_str())) {
            return Err(IndexError::DuplicateHash(dup.hash.clone()));
        }

        let texts: Vec<&str> = chunks.iter().map(|c| c.body.as_str()).collect();
        let vectors = embedder.embed_batch(&texts, exec)?;
        let dim = embedder.dim();
        if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            }
            .into());
        }
        let mut entries: Vec<IndexEntry> = chunks.into_iter().zip(vectors).map(|(c, v)| IndexEntry::new(c, v)).collect();
        entries.sort_by(|a, b| a.chunk.hash.cmp(&b.chunk.hash));
        Ok(Self {
            fingerprint: embedder.fingerprint(),
            dim,
            entries,
        })
    }

    pub(crate) fn from_parts(fingerprint: String, dim: usize, mut entries: Vec<(ChunkObject, EmbeddingVector)>) -> Self {
        entries.sort_by(|a, b| a.0.hash.cmp(&b.0.hash));
        Self {
            fingerprint,
            dim,
            entries: entries.into_iter().map(|(c, v)| IndexEntry::new(c, v)).collect(),
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending hash order.
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn chunks(&self) -> impl Iterator<Item = &ChunkObject> {
        self.entries.iter().map(|e| &e.chunk)
    }

    pub fn get(&self, hash: &str) -> Option<&IndexEntry> {
        self.entries
            .binary_search_by(|e| e.chunk.hash.as_str().cmp(hash))
            .ok()
            .map(|i| &self.entries[i])
    }

    fn check_embedder(&self, embedder: &dyn Embedder) -> Result<(), IndexError> {
        let active = embedder.fingerprint();
        if active != self.fingerprint {
            return Err(IndexError::FingerprintMismatch {
                expected: active,
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Top-`k` chunks by cosine similarity to `query`.
    pub fn retrieve(&self, embedder: &dyn Embedder, query: &str, k: usize) -> Result<Vec<SemanticHit>, IndexError> {
        self.retrieve_with(embedder, query, k, Execution::default())
    }

    pub fn retrieve_with(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
        exec: Execution,
    ) -> Result<Vec<SemanticHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        self.check_embedder(embedder)?;
        let q = embedder.embed(query)?;
        if q.dim() != self.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dim,
                got: q.dim(),
            }
            .into());
        }
        Ok(self.search_vector(&q, k, exec))
    }

    /// Exhaustive top-`k` for an already embedded query.
    pub fn search_vector(&self, query: &EmbeddingVector, k: usize, exec: Execution) -> Vec<SemanticHit> {
        let q_norm = query.norm();
        let scores: Vec<f64> = exec.map(&self.entries, |e| {
            cosine_with_norms(query.values(), q_norm, e.vector.values(), e.norm)
        });
        // entries are hash-sorted, so index order doubles as the tie-break
        let by_rank = |&a: &usize, &b: &usize| {
            scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        };
        let mut order: Vec<usize> = (0..scores.len()).collect();
        let k = k.min(order.len());
        if k < order.len() {
            order.select_nth_unstable_by(k, by_rank);
            order.truncate(k);
        }
        order.sort_unstable_by(by_rank);
        order
            .into_iter()
            .map(|i| SemanticHit {
                chunk_hash: self.entries[i].chunk.hash.clone(),
                object_key: self.entries[i].chunk.object_key.clone(),
                similarity: scores[i],
            })
            .collect()
    }
}
