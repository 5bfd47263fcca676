//! Comparative retrieval-augmented generation.
//!
//! Documents are chunked into chunk-objects (one object per chunk), each
//! tagged with a content hash. Retrieval ranks chunks by cosine similarity;
//! the evaluator then binds every hit's hash to an external deterministic
//! ranking (the filtration list) and filters or reorders the hits before an
//! answer is generated from them.
//!
//! ```
//! use std::sync::Arc;
//! use comprag_core::prelude::*;
//!
//! let records = r#"{"object_key": "Gio's", "properties": {"cuisine": "Italian"}, "text": "Handmade pasta."}"#;
//! let chunks = chunk_document(&Document::new("menu", records), &ChunkingConfig::default()).unwrap();
//! let embedder = Arc::new(HashingEmbedder::default());
//! let index = CorpusIndex::build(chunks, embedder.as_ref()).unwrap();
//! let flist = FiltrationList::from_scores([("Gio's", 0.9)]).unwrap();
//!
//! let req = QueryRequest::new("italian pasta", 5, EvaluatorPolicy::default());
//! let bundle = Pipeline::new(embedder).answer(&index, &flist, &req).unwrap();
//! assert_eq!(bundle.evidence[0].object_key, "Gio's");
//! ```

pub mod chunker;
pub mod evaluator;
pub mod exec;
pub mod index;
pub mod pipeline;
pub mod recommender;
pub mod text;

pub mod prelude {
    pub use crate::chunker::{chunk_document, validate_relevance, ChunkObject, ChunkingConfig, Document};
    pub use crate::evaluator::{
        assign_hash, correlate, evaluate, CorrelationMap, EvaluatedHit, EvaluatorMode, EvaluatorPolicy,
        FiltrationList, MissingPolicy,
    };
    pub use crate::exec::Execution;
    pub use crate::index::{CorpusIndex, Embedder, HashingEmbedder, SemanticHit};
    pub use crate::pipeline::{AnswerBundle, Pipeline, QueryRequest};
    pub use crate::recommender::{build_filtration, MetricBounds, MetricRecord, MetricWeights};
}
