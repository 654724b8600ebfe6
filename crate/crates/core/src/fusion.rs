//! Reciprocal rank fusion.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bm25::{RankedEntry, RankedList};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub u: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { u: 40.0 }
    }
}

/// Fused ranking over chunk-id lists. Ranks are 1-based; a ranker that
/// omits a document adds nothing for it. Each document's terms are added
/// best rank first, so the order of `rankings` cannot change a score.
pub fn rrf_fuse<S: AsRef<str>>(rankings: &[Vec<S>], config: &FusionConfig) -> Result<Vec<RankedEntry>> {
    if rankings.is_empty() {
        return Err(Error::InvalidArgument("RRF needs at least one ranking".into()));
    }
    if !(config.u > 0.0) || !config.u.is_finite() {
        return Err(Error::InvalidArgument(format!("RRF constant must be positive, got {}", config.u)));
    }
    let mut ranks: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for ranking in rankings {
        let mut seen = HashSet::new();
        for (i, id) in ranking.iter().enumerate() {
            let id = id.as_ref();
            if !seen.insert(id) {
                return Err(Error::DuplicateInRanking(id.to_string()));
            }
            ranks.entry(id).or_default().push(i + 1);
        }
    }
    let mut fused: Vec<RankedEntry> = ranks
        .into_iter()
        .map(|(id, mut r)| {
            r.sort_unstable();
            RankedEntry {
                chunk_id: id.to_string(),
                score: r.iter().map(|&rank| 1.0 / (config.u + rank as f64)).sum(),
            }
        })
        .collect();
    fused.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
    Ok(fused)
}

/// Fuse whole runs query by query. Queries are taken in the order of the
/// first run; every run must cover the same queries. Output is cut to `depth`.
pub fn fuse_runs(runs: &[&[RankedList]], config: &FusionConfig, depth: usize) -> Result<Vec<RankedList>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("RRF needs at least one run".into()))?;
    let lookup: Vec<BTreeMap<&str, &RankedList>> = runs
        .iter()
        .map(|run| run.iter().map(|l| (l.query_id.as_str(), l)).collect())
        .collect();
    first
        .iter()
        .map(|list| {
            let rankings = lookup
                .iter()
                .map(|m| {
                    m.get(list.query_id.as_str())
                        .map(|l| l.chunk_ids())
                        .ok_or_else(|| Error::InvalidArgument(format!("query `{}` missing from a run", list.query_id)))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut entries = rrf_fuse(&rankings, config)?;
            entries.truncate(depth);
            Ok(RankedList {
                query_id: list.query_id.clone(),
                entries,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_rankings_keep_order() {
        let r = ids(&["z", "a", "m"]);
        let fused = rrf_fuse(&[r.clone(), r.clone()], &FusionConfig::default()).unwrap();
        assert_eq!(fused.iter().map(|e| e.chunk_id.as_str()).collect::<Vec<_>>(), ["z", "a", "m"]);
    }

    #[test]
    fn exact_fractions() {
        let fused = rrf_fuse(&[ids(&["d", "x", "y"]), ids(&["x", "y", "d"])], &FusionConfig::default()).unwrap();
        let d = fused.iter().find(|e| e.chunk_id == "d").unwrap();
        assert_eq!(d.score, 1.0 / 41.0 + 1.0 / 43.0);
        assert!((d.score - 84.0 / 1763.0).abs() < 1e-15);

        let fused = rrf_fuse(&[ids(&["a", "b"]), ids(&["c", "b"])], &FusionConfig::default()).unwrap();
        assert_eq!(fused[0].chunk_id, "b");
        assert!((fused[0].score - 2.0 / 42.0).abs() < 1e-15);
        let a = fused.iter().find(|e| e.chunk_id == "a").unwrap();
        assert!((a.score - 1.0 / 41.0).abs() < 1e-15);
    }

    #[test]
    fn duplicates_rejected() {
        let err = rrf_fuse(&[ids(&["a", "a"])], &FusionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateInRanking(id) if id == "a"));
    }

    fn ranking() -> impl Strategy<Value = Vec<String>> {
        prop::sample::subsequence((0..12).map(|i| format!("c{i:02}")).collect::<Vec<_>>(), 0..12)
            .prop_shuffle()
    }

    proptest! {
        #[test]
        fn permutation_invariant(rankers in prop::collection::vec(ranking(), 1..5), rot in 0usize..5) {
            let mut rotated = rankers.clone();
            let n = rotated.len();
            rotated.rotate_left(rot % n);
            rotated.reverse();
            let a = rrf_fuse(&rankers, &FusionConfig::default()).unwrap();
            let b = rrf_fuse(&rotated, &FusionConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn unanimous_top_is_max(rankers in prop::collection::vec(ranking(), 1..5)) {
            let mut rankers = rankers;
            for r in &mut rankers {
                r.retain(|id| id != "top");
                r.insert(0, "top".to_string());
            }
            let fused = rrf_fuse(&rankers, &FusionConfig::default()).unwrap();
            prop_assert_eq!(fused[0].chunk_id.as_str(), "top");
        }

        #[test]
        fn removing_a_ranker_never_raises(rankers in prop::collection::vec(ranking(), 2..5), drop in 0usize..5) {
            let full = rrf_fuse(&rankers, &FusionConfig::default()).unwrap();
            let mut fewer = rankers.clone();
            fewer.remove(drop % rankers.len());
            let part = rrf_fuse(&fewer, &FusionConfig::default()).unwrap();
            for e in &part {
                let before = full.iter().find(|f| f.chunk_id == e.chunk_id).unwrap();
                prop_assert!(e.score <= before.score + 1e-15);
            }
        }
    }
}
