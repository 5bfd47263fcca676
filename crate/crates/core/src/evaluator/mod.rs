//! Bridges semantic retrieval and an external deterministic ranking.
//!
//! Chunk-objects carry hash tokens ([`assign_hash`]); [`correlate`] binds each
//! token to the filtration entry of its object; [`evaluate`] then admits or
//! reorders semantic hits according to an [`EvaluatorPolicy`].

mod correlate;
mod filtration;
mod hash;
mod policy;

use thiserror::Error;

pub use correlate::{correlate, correlate_chunks, Binding, CorrelationMap};
pub use filtration::{FiltrationEntry, FiltrationList};
pub use hash::{assign_hash, cited_hashes, is_hash_token, HASH_HEX_LEN};
pub use policy::{evaluate, semantic_norm, EvaluatedHit, EvaluatorMode, EvaluatorPolicy, MissingPolicy};

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("duplicate object key {0:?} in filtration list")]
    DuplicateKey(String),
    #[error("non-finite score for object {object_key:?}")]
    NonFiniteScore { object_key: String },
    #[error("cannot parse filtration list: {0}")]
    Parse(String),
    #[error("invalid evaluator policy: {0}")]
    PolicyInvalid(String),
    #[error("hit {0} is not in the correlation map")]
    UnknownHash(String),
}
