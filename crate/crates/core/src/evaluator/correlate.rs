use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::FiltrationList;
use crate::chunker::ChunkObject;
use crate::index::CorpusIndex;
use crate::text::canonical_key;

/// Filtration entry a chunk hash is bound to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub object_key: String,
    pub rank: usize,
    pub score: f64,
}

/// Links in-model chunk hashes to out-of-model filtration entries.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationMap {
    pub bindings: BTreeMap<String, Binding>,
    pub unmatched_hashes: BTreeSet<String>,
    pub unmatched_keys: BTreeSet<String>,
}

impl CorrelationMap {
    pub fn binding(&self, hash: &str) -> Option<&Binding> {
        self.bindings.get(hash)
    }

    /// Whether `hash` was seen during correlation, bound or not.
    pub fn knows(&self, hash: &str) -> bool {
        self.bindings.contains_key(hash) || self.unmatched_hashes.contains(hash)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("correlation map serializes");
        s.push('\n');
        s
    }
}

/// Binds every chunk in `index` to the filtration entry with the same
/// canonical object key.
pub fn correlate(index: &CorpusIndex, flist: &FiltrationList) -> CorrelationMap {
    correlate_chunks(index.chunks(), flist)
}

pub fn correlate_chunks<'a>(chunks: impl IntoIterator<Item = &'a ChunkObject>, flist: &FiltrationList) -> CorrelationMap {
    let by_key: HashMap<String, usize> = flist
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (canonical_key(&e.object_key), i))
        .collect();
    let mut used = vec![false; flist.len()];
    let mut map = CorrelationMap::default();
    for chunk in chunks {
        match by_key.get(&canonical_key(&chunk.object_key)) {
            Some(&i) => {
                let e = &flist.entries()[i];
                used[i] = true;
                map.bindings.insert(
                    chunk.hash.clone(),
                    Binding {
                        object_key: e.object_key.clone(),
                        rank: e.rank,
                        score: e.score,
                    },
                );
            }
            None => {
                map.unmatched_hashes.insert(chunk.hash.clone());
            }
        }
    }
    map.unmatched_keys = flist
        .entries()
        .iter()
        .zip(used)
        .filter(|(_, used)| !used)
        .map(|(e, _)| e.object_key.clone())
        .collect();
    map
}
