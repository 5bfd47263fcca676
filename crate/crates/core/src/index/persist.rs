//! Binary index file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "COMPRAG\0"
//! version    u32
//! length     u64      payload byte count
//! payload    length bytes
//! checksum   32 bytes SHA-256 of payload
//! ```
//!
//! The payload holds the embedder fingerprint, the dimension, and every entry
//! in ascending hash order: hash, object key, body, source doc id, token
//! count, properties (sorted), then `dim` f64 values. Strings are a u64 byte
//! length followed by UTF-8. Entry order and property order are fixed, so
//! identical indexes serialize to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{CorpusIndex, Embedder, EmbeddingVector, IndexError};
use crate::chunker::ChunkObject;
use crate::evaluator::assign_hash;

pub const INDEX_MAGIC: &[u8; 8] = b"COMPRAG\0";
pub const INDEX_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u64(buf, s.len() as u64);
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| IndexError::CorruptIndex(format!("unexpected end of payload at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, IndexError> {
        usize::try_from(self.u64()?).map_err(|_| IndexError::CorruptIndex("length overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64, IndexError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, IndexError> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| IndexError::CorruptIndex(e.to_string()))
    }
}

impl CorpusIndex {
    /// Serialized index file contents.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        put_str(&mut payload, &self.fingerprint);
        put_u64(&mut payload, self.dim as u64);
        put_u64(&mut payload, self.entries.len() as u64);
        for entry in &self.entries {
            let c = &entry.chunk;
            put_str(&mut payload, &c.hash);
            put_str(&mut payload, &c.object_key);
            put_str(&mut payload, &c.body);
            put_str(&mut payload, &c.source_doc_id);
            put_u64(&mut payload, c.token_count as u64);
            put_u64(&mut payload, c.properties.len() as u64);
            for (k, v) in &c.properties {
                put_str(&mut payload, k);
                put_str(&mut payload, v);
            }
            for v in entry.vector.values() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }

        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        put_u64(&mut out, payload.len() as u64);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    /// Parses index file contents without checking the embedder fingerprint.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let corrupt = |m: &str| IndexError::CorruptIndex(m.to_string());
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(corrupt("file shorter than header"));
        }
        if &bytes[..8] != INDEX_MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != INDEX_VERSION {
            return Err(IndexError::CorruptIndex(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        if len != (bytes.len() - HEADER_LEN - CHECKSUM_LEN) as u64 {
            return Err(corrupt("payload length does not match file size"));
        }
        let (payload, checksum) = bytes[HEADER_LEN..].split_at(bytes.len() - HEADER_LEN - CHECKSUM_LEN);
        if Sha256::digest(payload).as_slice() != checksum {
            return Err(corrupt("checksum mismatch"));
        }

        let mut r = Reader { buf: payload, pos: 0 };
        let fingerprint = r.string()?;
        if fingerprint.is_empty() {
            return Err(corrupt("empty embedder fingerprint"));
        }
        let dim = r.len()?;
        if dim == 0 {
            return Err(corrupt("zero dimension"));
        }
        let count = r.len()?;
        let mut entries = Vec::with_capacity(count.min(payload.len()));
        for _ in 0..count {
            let hash = r.string()?;
            let object_key = r.string()?;
            let body = r.string()?;
            let source_doc_id = r.string()?;
            let token_count = r.len()?;
            let n_props = r.len()?;
            let mut properties = BTreeMap::new();
            for _ in 0..n_props {
                let k = r.string()?;
                properties.insert(k, r.string()?);
            }
            let values = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            let vector = EmbeddingVector::new(values).map_err(|e| IndexError::CorruptIndex(e.to_string()))?;
            if hash != assign_hash(&object_key, &body) {
                return Err(IndexError::CorruptIndex(format!("hash {hash} does not match its chunk")));
            }
            let chunk = ChunkObject {
                hash,
                object_key,
                body,
                properties,
                token_count,
                source_doc_id,
            };
            entries.push((chunk, vector));
        }
        if r.pos != payload.len() {
            return Err(corrupt("trailing bytes after last entry"));
        }
        let index = Self::from_parts(fingerprint, dim, entries);
        if index.entries.windows(2).any(|w| w[0].chunk.hash == w[1].chunk.hash) {
            return Err(corrupt("duplicate hash"));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Reads an index and checks it was built by an embedder configured like `embedder`.
    pub fn load(path: impl AsRef<Path>, embedder: &dyn Embedder) -> Result<Self, IndexError> {
        let index = Self::read_file(path)?;
        index.check_embedder(embedder)?;
        Ok(index)
    }

    /// Reads an index without any embedder check; for inspection only.
    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Human-readable JSON dump of the whole index.
    pub fn to_debug_json(&self) -> String {
        #[derive(Serialize)]
        struct Entry<'a> {
            #[serde(flatten)]
            chunk: &'a ChunkObject,
            vector: &'a EmbeddingVector,
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            embedder_fingerprint: &'a str,
            dim: usize,
            entries: Vec<Entry<'a>>,
        }
        let dump = Dump {
            embedder_fingerprint: &self.fingerprint,
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    chunk: &e.chunk,
                    vector: &e.vector,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dump).expect("index serializes")
    }
}
