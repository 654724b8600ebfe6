//! Ranking-list partitioning and per-interval sampling of BM25 results.
//!
//! A query's top-k BM25 list is cut into `m` contiguous rank intervals and
//! one passage is drawn uniformly from each, giving the training unit
//! `[q, p_1..p_m, r_1..r_m]`.
//!
//! All strategies reduce to apportioning a depth `n` among `m` intervals in
//! proportion to per-interval weights, using largest-remainder rounding
//! (ties go to the later interval) and a minimum length of one.

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm25::{InvertedIndex, RankedList};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::querygen::SyntheticQuery;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum PartitionScheme {
    Uniform,
    FineToCoarse {
        #[serde(default = "default_first_len")]
        first_len: usize,
        #[serde(default = "default_growth")]
        growth: f64,
    },
    /// Interval lengths are given directly and must sum to `k`.
    Explicit { boundaries: Vec<(usize, usize)> },
}

fn default_first_len() -> usize {
    3
}

fn default_growth() -> f64 {
    2.0
}

impl Default for PartitionScheme {
    fn default() -> Self {
        PartitionScheme::FineToCoarse {
            first_len: default_first_len(),
            growth: default_growth(),
        }
    }
}

impl PartitionScheme {
    pub fn name(&self) -> &'static str {
        match self {
            PartitionScheme::Uniform => "uniform",
            PartitionScheme::FineToCoarse { .. } => "fine_to_coarse",
            PartitionScheme::Explicit { .. } => "explicit",
        }
    }

    fn weights(&self, m: usize) -> Vec<f64> {
        match self {
            PartitionScheme::Uniform => vec![1.0; m],
            PartitionScheme::FineToCoarse { first_len, growth } => {
                let mut w = Vec::with_capacity(m);
                let mut x = *first_len as f64;
                for _ in 0..m {
                    w.push(x);
                    x *= growth;
                }
                w
            }
            PartitionScheme::Explicit { boundaries } => {
                boundaries.iter().map(|(s, e)| (e - s) as f64).collect()
            }
        }
    }

    pub fn validate(&self, k: usize, m: usize) -> Result<()> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("m must be at least 2, got {m}")));
        }
        if k < m {
            return Err(Error::InvalidArgument(format!("k ({k}) must be at least m ({m})")));
        }
        match self {
            PartitionScheme::Uniform => Ok(()),
            PartitionScheme::FineToCoarse { first_len, growth } => {
                if *first_len == 0 {
                    return Err(Error::InvalidArgument("first_len must be at least 1".into()));
                }
                if !(growth.is_finite() && *growth >= 1.0) {
                    return Err(Error::InvalidArgument(format!("growth must be >= 1, got {growth}")));
                }
                Ok(())
            }
            PartitionScheme::Explicit { boundaries } => {
                if boundaries.len() != m {
                    return Err(Error::InvalidArgument(format!(
                        "explicit partition has {} intervals, expected m = {m}",
                        boundaries.len()
                    )));
                }
                let mut expected_start = 0;
                for &(s, e) in boundaries {
                    if s != expected_start || e <= s {
                        return Err(Error::InvalidArgument(format!(
                            "explicit intervals must be non-empty and contiguous from 0; bad interval [{s},{e})"
                        )));
                    }
                    expected_start = e;
                }
                if expected_start != k {
                    return Err(Error::InvalidArgument(format!(
                        "explicit intervals cover [0,{expected_start}), expected [0,{k})"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Largest-remainder apportionment of `n` units by `weights`, each part >= 1.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let m = weights.len();
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut lengths: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = lengths.iter().sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(b.cmp(&a))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        lengths[i] += 1;
    }
    // Enforce the minimum by borrowing from the first of the longest parts.
    for i in 0..m {
        if lengths[i] == 0 {
            let max = *lengths.iter().max().expect("m > 0");
            let donor = lengths.iter().position(|&l| l == max).expect("max exists");
            lengths[donor] -= 1;
            lengths[i] = 1;
        }
    }
    lengths
}

/// Half-open rank intervals tiling `[0, k)`.
pub fn partition(k: usize, m: usize, scheme: &PartitionScheme) -> Result<Vec<Range<usize>>> {
    scheme.validate(k, m)?;
    let lengths = match scheme {
        PartitionScheme::Explicit { boundaries } => boundaries.iter().map(|(s, e)| e - s).collect(),
        other => apportion(k, &other.weights(m)),
    };
    Ok(to_ranges(&lengths))
}

fn to_ranges(lengths: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    lengths
        .iter()
        .map(|&l| {
            let r = start..start + l;
            start += l;
            r
        })
        .collect()
}

/// Intervals over an available list depth `n <= k`. At full depth this is
/// [`partition`]; a shorter list is apportioned with the same weights.
pub fn partition_available(n: usize, k: usize, m: usize, scheme: &PartitionScheme) -> Result<Vec<Range<usize>>> {
    if n < m {
        return Err(Error::RankingTooShort { available: n, needed: m });
    }
    if n >= k {
        return partition(k, m, scheme);
    }
    scheme.validate(k, m)?;
    Ok(to_ranges(&apportion(n, &scheme.weights(m))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSample {
    pub query_id: String,
    pub query_text: String,
    pub passages: Vec<String>,
    pub scores: Vec<f64>,
    /// 0-based rank of each passage in the source ranking.
    #[serde(default)]
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub k: usize,
    pub m: usize,
    pub scheme: PartitionScheme,
    pub lists_per_query: usize,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lists_per_query == 0 {
            return Err(Error::InvalidArgument("lists_per_query must be at least 1".into()));
        }
        self.scheme.validate(self.k, self.m)
    }
}

pub fn sample_ranking_list(
    query_id: &str,
    query_text: &str,
    ranked: &RankedList,
    config: &SamplingConfig,
    rng: &mut SplitMix64,
) -> Result<RankingSample> {
    let depth = ranked.len().min(config.k);
    let intervals = partition_available(depth, config.k, config.m, &config.scheme)?;
    let mut sample = RankingSample {
        query_id: query_id.to_string(),
        query_text: query_text.to_string(),
        passages: Vec::with_capacity(config.m),
        scores: Vec::with_capacity(config.m),
        ranks: Vec::with_capacity(config.m),
    };
    for interval in intervals {
        let rank = interval.start + rng.below(interval.len() as u64) as usize;
        let entry = &ranked.entries[rank];
        sample.passages.push(entry.chunk_id.clone());
        sample.scores.push(entry.score);
        sample.ranks.push(rank);
    }
    Ok(sample)
}

/// Stream for one `(query, draw)` pair, independent of processing order.
pub fn draw_rng(seed: u64, query_id: &str, draw: usize) -> SplitMix64 {
    SplitMix64::derive(seed, format!("{query_id}\u{0}{draw}").as_bytes())
}

pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    if epoch == 0 {
        seed
    } else {
        derive_seed(seed, format!("epoch\u{0}{epoch}").as_bytes())
    }
}

/// Samples for every query, in query order then draw order. Queries whose
/// ranking is shorter than `m` are skipped with a log line.
pub fn generate_training_set(
    queries: &[SyntheticQuery],
    index: &InvertedIndex,
    config: &SamplingConfig,
    seed: u64,
) -> Result<Vec<RankingSample>> {
    config.validate()?;
    let rankings: Vec<RankedList> = queries
        .par_iter()
        .map(|q| index.search_text(&q.query_id, &q.text, config.k))
        .collect();
    sample_from_rankings(queries, &rankings, config, seed)
}

pub fn sample_from_rankings(
    queries: &[SyntheticQuery],
    rankings: &[RankedList],
    config: &SamplingConfig,
    seed: u64,
) -> Result<Vec<RankingSample>> {
    let per_query: Vec<Result<Vec<RankingSample>>> = queries
        .par_iter()
        .zip(rankings.par_iter())
        .map(|(q, ranked)| {
            let mut out = Vec::with_capacity(config.lists_per_query);
            for draw in 0..config.lists_per_query {
                let mut rng = draw_rng(seed, &q.query_id, draw);
                match sample_ranking_list(&q.query_id, &q.text, ranked, config, &mut rng) {
                    Ok(s) => out.push(s),
                    Err(Error::RankingTooShort { available, needed }) => {
                        log::info!(
                            "skipping query {}: {available} BM25 hits, need {needed} (sparse lexical coverage)",
                            q.query_id
                        );
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::new();
    for batch in per_query {
        samples.extend(batch?);
    }
    Ok(samples)
}

pub fn write_samples(path: &Path, samples: &[RankingSample]) -> Result<()> {
    jsonl::write(path, samples)
}

pub fn read_samples(path: &Path) -> Result<Vec<RankingSample>> {
    let samples: Vec<RankingSample> = jsonl::read(path)?;
    for (i, s) in samples.iter().enumerate() {
        if s.passages.len() != s.scores.len() || s.passages.is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message: "passages and scores must be non-empty and equally long".into(),
            });
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm25::RankedEntry;
    use proptest::prelude::*;

    fn lens(r: &[Range<usize>]) -> Vec<usize> {
        r.iter().map(|x| x.len()).collect()
    }

    #[test]
    fn uniform_twenty_by_four() {
        assert_eq!(partition(20, 4, &PartitionScheme::Uniform).unwrap(), vec![0..5, 5..10, 10..15, 15..20]);
    }

    #[test]
    fn uniform_remainder_goes_last() {
        assert_eq!(lens(&partition(22, 4, &PartitionScheme::Uniform).unwrap()), [5, 5, 6, 6]);
    }

    #[test]
    fn explicit_accepted_verbatim() {
        let scheme = PartitionScheme::Explicit {
            boundaries: vec![(0, 2), (2, 6), (6, 12), (12, 20)],
        };
        assert_eq!(partition(20, 4, &scheme).unwrap(), vec![0..2, 2..6, 6..12, 12..20]);
    }

    #[test]
    fn explicit_rejects_gaps() {
        let scheme = PartitionScheme::Explicit {
            boundaries: vec![(0, 2), (3, 6)],
        };
        assert!(partition(6, 2, &scheme).is_err());
    }

    #[test]
    fn fine_to_coarse_largest_remainder() {
        let scheme = PartitionScheme::FineToCoarse { first_len: 1, growth: 2.0 };
        assert_eq!(partition(12, 3, &scheme).unwrap(), vec![0..2, 2..5, 5..12]);
    }

    #[test]
    fn k_below_m_is_error() {
        assert!(partition(3, 4, &PartitionScheme::Uniform).is_err());
        assert!(partition(5, 1, &PartitionScheme::Uniform).is_err());
    }

    fn ranked(n: usize) -> RankedList {
        RankedList {
            query_id: "q".into(),
            entries: (0..n)
                .map(|i| RankedEntry {
                    chunk_id: format!("c{i:03}"),
                    score: 100.0 - i as f64,
                })
                .collect(),
        }
    }

    fn cfg(k: usize, m: usize, scheme: PartitionScheme) -> SamplingConfig {
        SamplingConfig { k, m, scheme, lists_per_query: 1 }
    }

    #[test]
    fn exactly_m_entries_returns_list() {
        for scheme in [PartitionScheme::Uniform, PartitionScheme::default()] {
            let list = ranked(6);
            let s = sample_ranking_list("q", "t", &list, &cfg(200, 6, scheme), &mut SplitMix64::new(1)).unwrap();
            assert_eq!(s.passages, list.chunk_ids());
            assert_eq!(s.ranks, (0..6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn short_list_is_skipped() {
        let err = sample_ranking_list("q", "t", &ranked(3), &cfg(20, 6, PartitionScheme::Uniform), &mut SplitMix64::new(1));
        assert!(matches!(err, Err(Error::RankingTooShort { available: 3, needed: 6 })));
    }

    #[test]
    fn same_seed_same_sample() {
        let c = cfg(20, 4, PartitionScheme::Uniform);
        let a = sample_ranking_list("q", "t", &ranked(20), &c, &mut draw_rng(7, "q", 0)).unwrap();
        let b = sample_ranking_list("q", "t", &ranked(20), &c, &mut draw_rng(7, "q", 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn explicit_partition_draw_frequencies() {
        let scheme = PartitionScheme::Explicit {
            boundaries: vec![(0, 2), (2, 6), (6, 12), (12, 20)],
        };
        let c = cfg(20, 4, scheme);
        let list = ranked(20);
        let mut rng = SplitMix64::new(7);
        let mut counts = [0usize; 20];
        let draws = 10_000;
        for _ in 0..draws {
            let s = sample_ranking_list("q", "t", &list, &c, &mut rng).unwrap();
            assert!(s.ranks[0] < 2);
            assert!((12..20).contains(&s.ranks[3]));
            counts[s.ranks[3]] += 1;
        }
        for &n in &counts[12..20] {
            let f = n as f64 / draws as f64;
            assert!((f - 0.125).abs() < 0.01, "frequency {f}");
        }
    }

    #[test]
    fn scores_match_source_ranking() {
        let list = ranked(40);
        let s = sample_ranking_list("q", "t", &list, &cfg(40, 5, PartitionScheme::default()), &mut SplitMix64::new(3)).unwrap();
        for (id, (score, rank)) in s.passages.iter().zip(s.scores.iter().zip(&s.ranks)) {
            assert_eq!(&list.entries[*rank].chunk_id, id);
            assert_eq!(list.entries[*rank].score, *score);
        }
        assert!(s.scores[0] >= s.scores[4]);
    }

    proptest! {
        #[test]
        fn partitions_tile(k in 2usize..5000, m in 2usize..40, growth in 1.0f64..4.0, first in 1usize..10) {
            prop_assume!(k >= m);
            for scheme in [PartitionScheme::Uniform, PartitionScheme::FineToCoarse { first_len: first, growth }] {
                let r = partition(k, m, &scheme).unwrap();
                prop_assert_eq!(r.len(), m);
                prop_assert_eq!(r[0].start, 0);
                prop_assert_eq!(r[m - 1].end, k);
                for w in r.windows(2) {
                    prop_assert_eq!(w[0].end, w[1].start);
                }
                let l = lens(&r);
                prop_assert!(l.iter().all(|&x| x >= 1));
                for w in l.windows(2) {
                    prop_assert!(w[0] <= w[1], "non-decreasing: {:?}", l);
                }
                if scheme == PartitionScheme::Uniform {
                    prop_assert!(l[m - 1] - l[0] <= 1);
                }
            }
        }
    }
}
