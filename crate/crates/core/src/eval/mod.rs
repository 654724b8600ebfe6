//! Retrieval evaluation against gold evidence.

mod dense;
mod evidence;
mod metrics;
mod plot;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dense::{DenseIndex, Encoder};
pub use evidence::{match_evidence, ChunkTokens, DEFAULT_THETA};
pub use metrics::{
    alignment_normalized, alignment_raw, average_precision_at_10, hit_at_k, spearman, spearman_sts,
    squared_distance, uniformity,
};
pub use plot::{scatter_svg, ScatterPoint};

use crate::bm25::RankedList;
use crate::corpus::Chunk;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::text::TokenizerConfig;

/// A gold query: evidence spans, chunk ids, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub query_id: String,
    pub text: String,
    #[serde(default)]
    pub evidence: Vec<String>,
    #[serde(default)]
    pub chunk_ids: Vec<String>,
}

pub fn read_gold(path: &Path) -> Result<Vec<EvalQuery>> {
    let queries: Vec<EvalQuery> = crate::jsonl::read(path)?;
    for (i, q) in queries.iter().enumerate() {
        if q.evidence.is_empty() && q.chunk_ids.is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("query `{}` has no gold items", q.query_id),
            });
        }
    }
    Ok(queries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Evidence overlap threshold.
    pub theta: f64,
    /// Chunks sampled for uniformity.
    pub uniformity_sample: usize,
    pub seed: u64,
    /// Depth of the dense runs kept for fusion.
    pub run_depth: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            uniformity_sample: 512,
            seed: 42,
            run_depth: 100,
        }
    }
}

/// Gold queries with their relevant chunk sets resolved.
#[derive(Debug, Clone)]
pub struct GoldSet {
    pub queries: Vec<(EvalQuery, BTreeSet<String>)>,
    pub unmatchable: Vec<String>,
}

impl GoldSet {
    pub fn resolve(queries: &[EvalQuery], chunks: &[Chunk], tokenizer: &TokenizerConfig, theta: f64) -> Result<Self> {
        let known: BTreeSet<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();
        let index = ChunkTokens::new(chunks, tokenizer);
        let resolved: Vec<BTreeSet<String>> = queries
            .par_iter()
            .map(|q| {
                let mut rel = match_evidence(&q.evidence, &index, tokenizer, theta);
                rel.extend(q.chunk_ids.iter().filter(|id| known.contains(id.as_str())).cloned());
                rel
            })
            .collect();
        let mut out = Vec::new();
        let mut unmatchable = Vec::new();
        for (q, rel) in queries.iter().zip(resolved) {
            if rel.is_empty() {
                unmatchable.push(q.query_id.clone());
            } else {
                out.push((q.clone(), rel));
            }
        }
        if !unmatchable.is_empty() {
            log::warn!("{} gold queries match no chunk and are excluded", unmatchable.len());
        }
        Ok(Self {
            queries: out,
            unmatchable,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub hit_at_1: f64,
    pub hit_at_4: f64,
    pub hit_at_10: f64,
    pub ap_at_10: f64,
    pub num_relevant: usize,
    /// 1-based rank of the first relevant chunk in the run.
    pub first_relevant_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub num_queries: usize,
    pub unmatchable: usize,
    pub hit_at_1: f64,
    pub hit_at_4: f64,
    pub hit_at_10: f64,
    pub map_at_10: f64,
    pub alignment_raw: Option<f64>,
    pub alignment_norm: Option<f64>,
    pub uniformity_abs: Option<f64>,
    pub alignment_skipped: usize,
    pub per_query: Vec<QueryResult>,
}

fn score_query(query_id: &str, run: Option<&RankedList>, relevant: &BTreeSet<String>) -> QueryResult {
    let ids: Vec<&str> = run.map(|r| r.entries.iter().map(|e| e.chunk_id.as_str()).collect()).unwrap_or_default();
    QueryResult {
        query_id: query_id.to_string(),
        hit_at_1: hit_at_k(&ids, relevant, 1),
        hit_at_4: hit_at_k(&ids, relevant, 4),
        hit_at_10: hit_at_k(&ids, relevant, 10),
        ap_at_10: average_precision_at_10(&ids, relevant),
        num_relevant: relevant.len(),
        first_relevant_rank: ids.iter().position(|id| relevant.contains(*id)).map(|p| p + 1),
    }
}

/// Retrieval metrics for a precomputed run. Queries absent from the run
/// count as misses.
pub fn evaluate_run(method: &str, run: &[RankedList], gold: &GoldSet) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no evaluable queries".into()));
    }
    let by_id: BTreeMap<&str, &RankedList> = run.iter().map(|l| (l.query_id.as_str(), l)).collect();
    let per_query: Vec<QueryResult> = gold
        .queries
        .par_iter()
        .map(|(q, rel)| score_query(&q.query_id, by_id.get(q.query_id.as_str()).copied(), rel))
        .collect();
    let n = per_query.len() as f64;
    let mean = |f: fn(&QueryResult) -> f64| per_query.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        method: method.to_string(),
        num_queries: per_query.len(),
        unmatchable: gold.unmatchable.len(),
        hit_at_1: mean(|r| r.hit_at_1),
        hit_at_4: mean(|r| r.hit_at_4),
        hit_at_10: mean(|r| r.hit_at_10),
        map_at_10: mean(|r| r.ap_at_10),
        alignment_raw: None,
        alignment_norm: None,
        uniformity_abs: None,
        alignment_skipped: 0,
        per_query,
    })
}

/// Dense retrieval plus geometry diagnostics. `query_table` holds base query
/// vectors by query id and `chunk_table` base chunk vectors by chunk id.
/// Returns the report and the dense run at `config.run_depth`.
pub fn evaluate_dense(
    method: &str,
    encoder: &Encoder<'_>,
    query_table: &EmbeddingTable,
    chunk_table: &EmbeddingTable,
    chunks: &[Chunk],
    gold: &GoldSet,
    config: &EvalConfig,
) -> Result<(EvalReport, Vec<RankedList>)> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no evaluable queries".into()));
    }
    let chunk_ids: Vec<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();
    let index = DenseIndex::build(encoder, chunk_table, &chunk_ids)?;
    let qids: Vec<&str> = gold.queries.iter().map(|(q, _)| q.query_id.as_str()).collect();
    let qvecs = encoder.encode_cached(query_table, &qids)?;
    let inputs: Vec<(&str, Option<&[f32]>)> = qids.iter().zip(&qvecs).map(|(id, v)| (*id, v.as_deref())).collect();
    let run = index.search_all(&inputs, config.run_depth.max(10));
    let mut report = evaluate_run(method, &run, gold)?;

    let position: BTreeMap<&str, usize> = index.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut pairs: Vec<(&[f32], &[f32])> = Vec::new();
    for ((_, rel), qv) in gold.queries.iter().zip(&qvecs) {
        let Some(qv) = qv else { continue };
        for id in rel {
            if let Some(&i) = position.get(id.as_str()) {
                pairs.push((qv, &index.vectors[i]));
            }
        }
    }
    let database = index.vector_refs();
    if !pairs.is_empty() {
        report.alignment_raw = Some(alignment_raw(&pairs)?);
        match alignment_normalized(&pairs, &database) {
            Ok((v, skipped)) => {
                report.alignment_norm = Some(v);
                report.alignment_skipped = skipped;
                if skipped > 0 {
                    log::info!("{method}: {skipped} alignment pairs skipped (query coincides with a chunk)");
                }
            }
            Err(Error::Undefined(_)) => report.alignment_skipped = pairs.len(),
            Err(e) => return Err(e),
        }
    }
    let sample = uniformity_sample(database.len(), config.uniformity_sample, config.seed);
    if sample.len() >= 2 {
        let vs: Vec<&[f32]> = sample.iter().map(|&i| database[i]).collect();
        report.uniformity_abs = Some(uniformity(&vs)?);
    }
    Ok((report, run))
}

/// Seeded choice of `min(size, n)` indices out of `n`, ascending.
pub fn uniformity_sample(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if size < n {
        SplitMix64::derive(seed, b"uniformity").shuffle(&mut idx);
        idx.truncate(size);
        idx.sort_unstable();
    }
    idx
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    crate::jsonl::write_json(path, report)
}

pub fn per_query_csv(report: &EvalReport) -> String {
    let mut out = String::from("query_id,hit@1,hit@4,hit@10,ap@10,num_relevant,first_relevant_rank\n");
    for r in &report.per_query {
        let rank = r.first_relevant_rank.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.query_id, r.hit_at_1, r.hit_at_4, r.hit_at_10, r.ap_at_10, r.num_relevant, rank
        );
    }
    out
}

pub fn write_per_query_csv(path: &Path, report: &EvalReport) -> Result<()> {
    std::fs::write(path, per_query_csv(report)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
