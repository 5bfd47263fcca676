use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorrelationMap, EvaluatorError, FiltrationList};
use crate::index::SemanticHit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorMode {
    /// Keep retrieval order; only annotate hits.
    PassThrough,
    /// Admit hits whose filtration rank is within the cutoff.
    Filter,
    /// Reorder by a convex combination of semantic and deterministic scores.
    #[default]
    Fuse,
}

/// What happens to hits whose object has no filtration entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    Drop,
    KeepZero,
    #[default]
    KeepSemantic,
}

macro_rules! snake_case_enum_str {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    _ => Err(format!("unknown value {s:?}, expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
    };
}

snake_case_enum_str!(EvaluatorMode { PassThrough => "pass_through", Filter => "filter", Fuse => "fuse" });
snake_case_enum_str!(MissingPolicy { Drop => "drop", KeepZero => "keep_zero", KeepSemantic => "keep_semantic" });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorPolicy {
    pub mode: EvaluatorMode,
    /// Weight on semantic similarity in fuse mode.
    pub alpha: f64,
    /// Filter-mode rank cutoff; `None` admits every ranked object.
    pub cutoff_m: Option<usize>,
    pub missing_policy: MissingPolicy,
}

impl Default for EvaluatorPolicy {
    fn default() -> Self {
        Self {
            mode: EvaluatorMode::Fuse,
            alpha: 0.5,
            cutoff_m: None,
            missing_policy: MissingPolicy::KeepSemantic,
        }
    }
}

impl EvaluatorPolicy {
    pub fn pass_through() -> Self {
        Self {
            mode: EvaluatorMode::PassThrough,
            ..Self::default()
        }
    }

    pub fn filter(cutoff_m: usize, missing_policy: MissingPolicy) -> Self {
        Self {
            mode: EvaluatorMode::Filter,
            cutoff_m: Some(cutoff_m),
            missing_policy,
            ..Self::default()
        }
    }

    pub fn fuse(alpha: f64, missing_policy: MissingPolicy) -> Self {
        Self {
            mode: EvaluatorMode::Fuse,
            alpha,
            missing_policy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EvaluatorError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(EvaluatorError::PolicyInvalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.cutoff_m == Some(0) {
            return Err(EvaluatorError::PolicyInvalid("cutoff_m must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedHit {
    pub chunk_hash: String,
    pub object_key: String,
    /// Raw cosine similarity from retrieval.
    pub semantic: f64,
    /// Normalized filtration score in `[0, 1]`.
    pub deterministic: f64,
    pub fused: f64,
    pub final_rank: usize,
    /// Rank in the filtration list, absent for unmatched objects.
    pub filtration_rank: Option<usize>,
}

/// Maps a cosine similarity from `[-1, 1]` onto `[0, 1]`.
pub fn semantic_norm(similarity: f64) -> f64 {
    (similarity + 1.0) / 2.0
}

/// Applies `policy` to semantic hits, producing the admitted and ordered result set.
///
/// Every hit must be known to `cmap`. The output only ever contains input hits.
pub fn evaluate(
    hits: &[SemanticHit],
    cmap: &CorrelationMap,
    flist: &FiltrationList,
    policy: &EvaluatorPolicy,
) -> Result<Vec<EvaluatedHit>, EvaluatorError> {
    policy.validate()?;
    let alpha = policy.alpha;

    let mut out = Vec::with_capacity(hits.len());
    for hit in hits {
        let sem = semantic_norm(hit.similarity);
        let (deterministic, filtration_rank) = match cmap.binding(&hit.chunk_hash) {
            Some(b) => {
                if policy.mode == EvaluatorMode::Filter && policy.cutoff_m.is_some_and(|m| b.rank > m) {
                    continue;
                }
                (flist.normalized(b.score), Some(b.rank))
            }
            None if cmap.knows(&hit.chunk_hash) => match policy.missing_policy {
                MissingPolicy::Drop if policy.mode != EvaluatorMode::PassThrough => continue,
                MissingPolicy::Drop | MissingPolicy::KeepZero => (0.0, None),
                MissingPolicy::KeepSemantic => (sem, None),
            },
            None => return Err(EvaluatorError::UnknownHash(hit.chunk_hash.clone())),
        };
        out.push(EvaluatedHit {
            chunk_hash: hit.chunk_hash.clone(),
            object_key: hit.object_key.clone(),
            semantic: hit.similarity,
            deterministic,
            fused: alpha * sem + (1.0 - alpha) * deterministic,
            final_rank: 0,
            filtration_rank,
        });
    }

    if policy.mode == EvaluatorMode::Fuse {
        out.sort_by(|a, b| {
            b.fused
                .partial_cmp(&a.fused)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.chunk_hash.cmp(&b.chunk_hash))
        });
    }
    for (i, h) in out.iter_mut().enumerate() {
        h.final_rank = i + 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::chunker::ChunkObject;
    use crate::evaluator::correlate_chunks;

    struct Fixture {
        chunks: Vec<ChunkObject>,
        flist: FiltrationList,
        cmap: CorrelationMap,
    }

    fn fixture(keys: &[&str], scores: &[(&str, f64)]) -> Fixture {
        let chunks: Vec<_> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| ChunkObject::new(*k, format!("body {i}"), BTreeMap::new(), "d"))
            .collect();
        let flist = FiltrationList::from_scores(scores.iter().copied()).unwrap();
        let cmap = correlate_chunks(&chunks, &flist);
        Fixture { chunks, flist, cmap }
    }

    fn hits(f: &Fixture, sims: &[f64]) -> Vec<SemanticHit> {
        f.chunks
            .iter()
            .zip(sims)
            .map(|(c, &s)| SemanticHit {
                chunk_hash: c.hash.clone(),
                object_key: c.object_key.clone(),
                similarity: s,
            })
            .collect()
    }

    fn keys(out: &[EvaluatedHit]) -> Vec<&str> {
        out.iter().map(|h| h.object_key.as_str()).collect()
    }

    #[test]
    fn pass_through_keeps_order() {
        let f = fixture(&["A", "B", "C"], &[]);
        let h = hits(&f, &[0.9, 0.5, 0.7]);
        let out = evaluate(&h, &f.cmap, &f.flist, &EvaluatorPolicy::pass_through()).unwrap();
        assert_eq!(keys(&out), ["A", "B", "C"]);
        assert_eq!(out.iter().map(|h| h.final_rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(out[1].deterministic, semantic_norm(0.5));
    }

    #[test]
    fn pass_through_never_drops() {
        let f = fixture(&["A", "B"], &[("A", 1.0)]);
        let policy = EvaluatorPolicy {
            missing_policy: MissingPolicy::Drop,
            ..EvaluatorPolicy::pass_through()
        };
        let out = evaluate(&hits(&f, &[0.1, 0.2]), &f.cmap, &f.flist, &policy).unwrap();
        assert_eq!(keys(&out), ["A", "B"]);
        assert_eq!(out[1].deterministic, 0.0);
    }

    #[test]
    fn filter_admits_within_cutoff() {
        let f = fixture(&["R", "G"], &[("G", 2.0), ("R", 1.0)]);
        let out = evaluate(
            &hits(&f, &[0.9, 0.8]),
            &f.cmap,
            &f.flist,
            &EvaluatorPolicy::filter(1, MissingPolicy::Drop),
        )
        .unwrap();
        assert_eq!(keys(&out), ["G"]);
        assert_eq!(out[0].filtration_rank, Some(1));
    }

    #[test]
    fn filter_missing_policies() {
        let f = fixture(&["X", "G", "R"], &[("G", 2.0), ("R", 1.0)]);
        let h = hits(&f, &[0.95, 0.9, 0.8]);
        let run = |mp| evaluate(&h, &f.cmap, &f.flist, &EvaluatorPolicy::filter(1, mp)).unwrap();
        assert_eq!(keys(&run(MissingPolicy::Drop)), ["G"]);
        let zero = run(MissingPolicy::KeepZero);
        assert_eq!(keys(&zero), ["X", "G"]);
        assert_eq!(zero[0].deterministic, 0.0);
        let sem = run(MissingPolicy::KeepSemantic);
        assert_eq!(keys(&sem), ["X", "G"]);
        assert_eq!(sem[0].deterministic, semantic_norm(0.95));
    }

    #[test]
    fn fuse_reorders_by_combined_score() {
        let f = fixture(&["A", "B", "C"], &[("A", 0.0), ("B", 10.0), ("C", 5.0)]);
        let out = evaluate(
            &hits(&f, &[0.8, 0.2, 0.4]),
            &f.cmap,
            &f.flist,
            &EvaluatorPolicy::fuse(0.5, MissingPolicy::KeepSemantic),
        )
        .unwrap();
        // A: .5*.9 + 0 = .45; B: .5*.6 + .5*1 = .8; C: .5*.7 + .5*.5 = .6
        assert_eq!(keys(&out), ["B", "C", "A"]);
        assert!((out[0].fused - 0.8).abs() < 1e-12);
        assert!((out[2].fused - 0.45).abs() < 1e-12);
    }

    #[test]
    fn invalid_policy_and_unknown_hash() {
        let f = fixture(&["A"], &[]);
        let h = hits(&f, &[0.5]);
        let bad = EvaluatorPolicy::fuse(1.5, MissingPolicy::Drop);
        assert!(matches!(evaluate(&h, &f.cmap, &f.flist, &bad), Err(EvaluatorError::PolicyInvalid(_))));
        let zero_cut = EvaluatorPolicy::filter(0, MissingPolicy::Drop);
        assert!(matches!(evaluate(&h, &f.cmap, &f.flist, &zero_cut), Err(EvaluatorError::PolicyInvalid(_))));
        let stranger = SemanticHit {
            chunk_hash: "0".repeat(32),
            object_key: "?".into(),
            similarity: 0.0,
        };
        assert!(matches!(
            evaluate(&[stranger], &f.cmap, &f.flist, &EvaluatorPolicy::default()),
            Err(EvaluatorError::UnknownHash(_))
        ));
    }

    #[test]
    fn mode_names_parse() {
        assert_eq!("pass_through".parse::<EvaluatorMode>().unwrap(), EvaluatorMode::PassThrough);
        assert_eq!("keep_zero".parse::<MissingPolicy>().unwrap(), MissingPolicy::KeepZero);
        assert!("fusion".parse::<EvaluatorMode>().is_err());
        assert_eq!(EvaluatorMode::Filter.to_string(), "filter");
    }
}
