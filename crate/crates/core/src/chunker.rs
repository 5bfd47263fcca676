//! Turns object-record documents into chunk-objects.
//!
//! The rule-based strategy reads JSONL where each line describes one object:
//!
//! ```text
//! {"object_key": "Gio's", "properties": {"cuisine": "Italian"}, "text": "Handmade pasta..."}
//! ```
//!
//! Each record is rendered into property lines (`key: value` in key order,
//! followed by the non-blank lines of `text`). Lines are atoms: a chunk never
//! splits one. Records whose lines exceed `target_size` whitespace tokens are
//! packed greedily into several chunks that all carry the record's key.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::assign_hash;
use crate::text::whitespace_token_count;

pub const DEFAULT_TARGET_SIZE: usize = 64;
pub const DEFAULT_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }
}

/// One retrievable unit: the body text of a single object plus its hash token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkObject {
    pub hash: String,
    pub object_key: String,
    pub body: String,
    pub properties: BTreeMap<String, String>,
    pub token_count: usize,
    pub source_doc_id: String,
}

impl ChunkObject {
    /// Builds a chunk, deriving `hash` and `token_count` from the key and body.
    pub fn new(
        object_key: impl Into<String>,
        body: impl Into<String>,
        properties: BTreeMap<String, String>,
        source_doc_id: impl Into<String>,
    ) -> Self {
        let object_key = object_key.into();
        let body = body.into();
        Self {
            hash: assign_hash(&object_key, &body),
            token_count: whitespace_token_count(&body),
            object_key,
            body,
            properties,
            source_doc_id: source_doc_id.into(),
        }
    }

    /// Body with the hash token in its header slot, the form handed to generators.
    pub fn tagged_text(&self) -> String {
        format!("[{}] {}\n{}", self.hash, self.object_key, self.body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkingStrategy {
    #[default]
    RuleBased,
    ExternalSynthesizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub target_size: usize,
    pub tolerance: f64,
    pub strategy: ChunkingStrategy,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            target_size: DEFAULT_TARGET_SIZE,
            tolerance: DEFAULT_TOLERANCE,
            strategy: ChunkingStrategy::RuleBased,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.target_size == 0 {
            return Err(ChunkError::InvalidConfig("target_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tolerance) {
            return Err(ChunkError::InvalidConfig(format!(
                "tolerance {} outside [0, 1]",
                self.tolerance
            )));
        }
        Ok(())
    }

    /// Largest token count any chunk may carry.
    pub fn max_tokens(&self) -> usize {
        (self.target_size as f64 * (1.0 + self.tolerance)).floor() as usize
    }
}

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("property line of {tokens} tokens in object {object_key:?} exceeds the {limit}-token bound")]
    OversizedAtom {
        object_key: String,
        tokens: usize,
        limit: usize,
    },
    #[error("strategy is external_synthesizer but no synthesizer is configured")]
    ExternalSynthesizerUnavailable,
    #[error("external synthesizer failed: {0}")]
    Synthesizer(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("invalid chunking config: {0}")]
    InvalidConfig(String),
}

/// An object's worth of text as produced by an external synthesizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesizedChunk {
    pub object_key: String,
    pub body: String,
    pub properties: BTreeMap<String, String>,
}

/// Pluggable chunk producer, e.g. an LLM asked to synthesize the document
/// into `target_size`-token chunks, one object per chunk.
pub trait ChunkSynthesizer: Send + Sync {
    fn synthesize(&self, doc: &Document, target_size: usize) -> Result<Vec<SynthesizedChunk>, ChunkError>;
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    object_key: Option<String>,
    #[serde(default)]
    properties: BTreeMap<String, String>,
    #[serde(default)]
    text: String,
}

/// A parsed object record from the interchange format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectRecord {
    pub object_key: String,
    pub properties: BTreeMap<String, String>,
    pub text: String,
}

impl ObjectRecord {
    /// Property lines in rendering order; each is an indivisible atom.
    pub fn property_lines(&self) -> Vec<String> {
        self.properties
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .chain(
                self.text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string),
            )
            .filter(|l| whitespace_token_count(l) > 0)
            .collect()
    }
}

/// Parses the JSONL object-record format. Blank lines are skipped.
pub fn parse_records(text: &str) -> Result<Vec<ObjectRecord>, ChunkError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| ChunkError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let object_key = raw.object_key.ok_or_else(|| ChunkError::MalformedRecord {
            line: line_no,
            reason: "missing object_key delimiter".into(),
        })?;
        let record = ObjectRecord {
            object_key,
            properties: raw.properties,
            text: raw.text,
        };
        if record.property_lines().is_empty() {
            return Err(ChunkError::MalformedRecord {
                line: line_no,
                reason: format!("object {:?} has no properties", record.object_key),
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Splits `doc` into chunk-objects using the rule-based strategy.
///
/// Fails with [`ChunkError::ExternalSynthesizerUnavailable`] when `cfg` asks
/// for the external strategy; use [`Chunker::with_synthesizer`] for that.
pub fn chunk_document(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<ChunkObject>, ChunkError> {
    Chunker::new(*cfg).chunk(doc)
}

/// Chunker with an optional external synthesizer.
pub struct Chunker {
    cfg: ChunkingConfig,
    synthesizer: Option<Box<dyn ChunkSynthesizer>>,
}

impl Chunker {
    pub fn new(cfg: ChunkingConfig) -> Self {
        Self { cfg, synthesizer: None }
    }

    pub fn with_synthesizer(mut self, synthesizer: Box<dyn ChunkSynthesizer>) -> Self {
        self.synthesizer = Some(synthesizer);
        self
    }

    pub fn config(&self) -> &ChunkingConfig {
        &self.cfg
    }

    pub fn chunk(&self, doc: &Document) -> Result<Vec<ChunkObject>, ChunkError> {
        self.cfg.validate()?;
        if doc.doc_id.is_empty() {
            return Err(ChunkError::InvalidDocument("doc_id is empty".into()));
        }
        if doc.text.trim().is_empty() {
            return Err(ChunkError::InvalidDocument(format!("document {:?} has no text", doc.doc_id)));
        }
        match self.cfg.strategy {
            ChunkingStrategy::RuleBased => self.chunk_records(doc),
            ChunkingStrategy::ExternalSynthesizer => self.chunk_external(doc),
        }
    }

    fn chunk_records(&self, doc: &Document) -> Result<Vec<ChunkObject>, ChunkError> {
        let records = parse_records(&doc.text)?;
        let mut chunks = Vec::new();
        for record in &records {
            for body in pack_lines(&record.object_key, &record.property_lines(), &self.cfg)? {
                chunks.push(ChunkObject::new(
                    record.object_key.clone(),
                    body,
                    record.properties.clone(),
                    doc.doc_id.clone(),
                ));
            }
        }
        Ok(chunks)
    }

    fn chunk_external(&self, doc: &Document) -> Result<Vec<ChunkObject>, ChunkError> {
        let synthesizer = self
            .synthesizer
            .as_ref()
            .ok_or(ChunkError::ExternalSynthesizerUnavailable)?;
        let limit = self.cfg.max_tokens();
        synthesizer
            .synthesize(doc, self.cfg.target_size)?
            .into_iter()
            .map(|s| {
                let tokens = whitespace_token_count(&s.body);
                if tokens > limit {
                    return Err(ChunkError::OversizedAtom {
                        object_key: s.object_key,
                        tokens,
                        limit,
                    });
                }
                Ok(ChunkObject::new(s.object_key, s.body, s.properties, doc.doc_id.clone()))
            })
            .collect()
    }
}

/// Greedy packing of atoms into bodies of at most `cfg.max_tokens()` tokens.
///
/// A chunk is closed once it reaches `target_size`, unless everything left in
/// the record still fits under the tolerance bound, in which case the tail is
/// absorbed rather than emitted as a tiny trailing chunk.
fn pack_lines(object_key: &str, lines: &[String], cfg: &ChunkingConfig) -> Result<Vec<String>, ChunkError> {
    let limit = cfg.max_tokens();
    let counts: Vec<usize> = lines.iter().map(|l| whitespace_token_count(l)).collect();
    if let Some((_, &tokens)) = counts.iter().enumerate().find(|(_, &c)| c > limit) {
        return Err(ChunkError::OversizedAtom {
            object_key: object_key.to_string(),
            tokens,
            limit,
        });
    }

    let mut remaining: usize = counts.iter().sum();
    let mut bodies = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut current_tokens = 0;
    for (line, &count) in lines.iter().zip(&counts) {
        let fits_target = current_tokens + count <= cfg.target_size;
        let absorbs_tail = current_tokens + remaining <= limit;
        if !current.is_empty() && !fits_target && !absorbs_tail {
            bodies.push(current.join("\n"));
            current.clear();
            current_tokens = 0;
        }
        current.push(line);
        current_tokens += count;
        remaining -= count;
    }
    if !current.is_empty() {
        bodies.push(current.join("\n"));
    }
    Ok(bodies)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RelevanceViolation {
    /// The chunk's object key is empty or whitespace.
    EmptyObjectKey { hash: String },
    /// Same `(object_key, body)` as an earlier chunk.
    DuplicateChunk { hash: String, first_index: usize, index: usize },
}

impl RelevanceViolation {
    pub fn hash(&self) -> &str {
        match self {
            Self::EmptyObjectKey { hash } | Self::DuplicateChunk { hash, .. } => hash,
        }
    }

    pub fn rule(&self) -> &'static str {
        match self {
            Self::EmptyObjectKey { .. } => "empty_object_key",
            Self::DuplicateChunk { .. } => "duplicate_chunk",
        }
    }
}

impl std::fmt::Display for RelevanceViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::EmptyObjectKey { hash } => write!(f, "{hash}: empty_object_key"),
            Self::DuplicateChunk { hash, first_index, index } => {
                write!(f, "{hash}: duplicate_chunk (chunk {index} repeats chunk {first_index})")
            }
        }
    }
}

/// Checks the one-object-per-chunk contract. An empty report means the
/// chunks may be indexed.
pub fn validate_relevance(chunks: &[ChunkObject]) -> Vec<RelevanceViolation> {
    let mut violations = Vec::new();
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    for (index, chunk) in chunks.iter().enumerate() {
        if chunk.object_key.trim().is_empty() {
            violations.push(RelevanceViolation::EmptyObjectKey {
                hash: chunk.hash.clone(),
            });
        }
        match seen.get(&(chunk.object_key.as_str(), chunk.body.as_str())) {
            Some(&first_index) => violations.push(RelevanceViolation::DuplicateChunk {
                hash: chunk.hash.clone(),
                first_index,
                index,
            }),
            None => {
                seen.insert((&chunk.object_key, &chunk.body), index);
            }
        }
    }
    violations
}
