//! Keyword masking and synonym substitution probes.

mod phrase;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use phrase::{contains_phrase, replace_phrases};

use crate::bm25::idf_value;
use crate::error::{Error, Result};
use crate::eval::{evaluate_run, EvalReport, GoldSet};
use crate::querygen::{IdfTable, LlmClient, PromptSet};
use crate::retrieval::Retriever;

pub const MASK: &str = "[MASK]";

/// Keywords for one query: model output parsed as a comma-separated list,
/// keeping only phrases present in both the query and the evidence.
pub fn extract_keywords(
    query: &str,
    evidence: &[String],
    llm: &dyn LlmClient,
    prompts: &PromptSet,
) -> Result<Vec<String>> {
    if evidence.is_empty() {
        return Err(Error::InvalidArgument("keyword extraction needs evidence".into()));
    }
    let paragraph = evidence.join("\n");
    let prompt = prompts.keywords.fill(&[("query", query), ("paragraph", &paragraph)]);
    let reply = llm.complete(&prompt)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for kw in parse_list(&reply) {
        if !(contains_phrase(query, &kw) && contains_phrase(&paragraph, &kw)) {
            log::info!("dropping keyword `{kw}`: not shared by query and evidence");
            continue;
        }
        if seen.insert(kw.to_lowercase()) {
            out.push(kw);
        }
    }
    Ok(out)
}

/// Offline extractor: distinct query tokens that also occur in the evidence,
/// by descending idf, at most `limit`. Tokens with idf below `min_idf` count
/// as frequent words and are skipped.
pub fn stub_keywords(query: &str, evidence: &[String], idf: &IdfTable, limit: usize, min_idf: f64) -> Vec<String> {
    let shared: HashSet<String> = evidence.iter().flat_map(|e| idf.tokenize(e)).collect();
    idf.ranked_terms(query)
        .into_iter()
        .filter(|(t, w)| shared.contains(t) && *w >= min_idf)
        .take(limit)
        .map(|(t, _)| t)
        .collect()
}

/// One synonym per keyword from the model, in keyword order.
pub fn generate_synonyms(
    query: &str,
    keywords: &[String],
    llm: &dyn LlmClient,
    prompts: &PromptSet,
) -> Result<BTreeMap<String, String>> {
    if keywords.is_empty() {
        return Ok(BTreeMap::new());
    }
    let prompt = prompts.synonyms.fill(&[("query", query), ("keywords", &keywords.join(", "))]);
    let reply = llm.complete(&prompt)?;
    let subs = parse_list(&reply);
    if subs.len() != keywords.len() {
        return Err(Error::LlmParse {
            message: format!("{} substitutions for {} keywords", subs.len(), keywords.len()),
            raw: reply,
        });
    }
    Ok(keywords.iter().cloned().zip(subs).collect())
}

fn parse_list(reply: &str) -> Vec<String> {
    let body = reply
        .lines()
        .map(|l| {
            let l = l.trim();
            match l.split_once(':') {
                Some((head, rest)) if head.to_lowercase().contains("keyword") => rest.trim(),
                _ => l,
            }
        })
        .collect::<Vec<_>>()
        .join(",");
    body.split(',')
        .map(|s| s.trim().trim_matches(|c| matches!(c, '"' | '\'' | '.' | '`' | '*')).trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Every whole-phrase occurrence of each keyword becomes `[MASK]`.
pub fn mask_keywords(query: &str, keywords: &[String]) -> String {
    let pairs: Vec<(&str, &str)> = keywords.iter().map(|k| (k.as_str(), MASK)).collect();
    replace_phrases(query, &pairs).0
}

/// Replace each keyword by its synonym. Errors if any keyword has none.
pub fn substitute_keywords(query: &str, keywords: &[String], synonyms: &BTreeMap<String, String>) -> Result<String> {
    let lookup: BTreeMap<String, &str> = synonyms.iter().map(|(k, v)| (k.to_lowercase(), v.as_str())).collect();
    let mut missing = Vec::new();
    let mut pairs = Vec::new();
    for k in keywords {
        match lookup.get(&k.to_lowercase()) {
            Some(s) => pairs.push((k.as_str(), *s)),
            None => missing.push(k.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingSynonyms(missing));
    }
    Ok(replace_phrases(query, &pairs).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedQuery {
    pub query_id: String,
    pub original: String,
    pub masked: String,
    pub substituted: String,
    pub keywords: Vec<String>,
    pub synonyms: BTreeMap<String, String>,
}

pub fn write_variants(path: &Path, variants: &[PerturbedQuery]) -> Result<()> {
    crate::jsonl::write(path, variants)
}

pub fn read_variants(path: &Path) -> Result<Vec<PerturbedQuery>> {
    crate::jsonl::read(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    Masked,
    Substituted,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Original, Variant::Masked, Variant::Substituted];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Masked => "masked",
            Variant::Substituted => "substituted",
        }
    }

    fn text(self, q: &PerturbedQuery) -> &str {
        match self {
            Variant::Original => &q.original,
            Variant::Masked => &q.masked,
            Variant::Substituted => &q.substituted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub method: String,
    pub variant: Variant,
    pub hit_at_1: f64,
    pub hit_at_4: f64,
    pub hit_at_10: f64,
    pub map_at_10: f64,
    /// Original minus this variant.
    pub drop_hit_at_1: f64,
    pub drop_hit_at_4: f64,
    pub drop_hit_at_10: f64,
    pub drop_map_at_10: f64,
}

/// Evaluate every method on the original, masked and substituted texts of
/// the same queries. Only queries present in both `variants` and `gold` are
/// scored.
pub fn run_perturbation_eval(
    methods: &[&dyn Retriever],
    variants: &[PerturbedQuery],
    gold: &GoldSet,
    depth: usize,
) -> Result<Vec<DeltaRow>> {
    let ids: HashSet<&str> = variants.iter().map(|v| v.query_id.as_str()).collect();
    let subset = GoldSet {
        queries: gold.queries.iter().filter(|(q, _)| ids.contains(q.query_id.as_str())).cloned().collect(),
        unmatchable: gold.unmatchable.clone(),
    };
    let mut rows = Vec::new();
    for method in methods {
        let mut reports: Vec<(Variant, EvalReport)> = Vec::new();
        for variant in Variant::ALL {
            let inputs: Vec<(&str, &str)> = variants.iter().map(|q| (q.query_id.as_str(), variant.text(q))).collect();
            let run = method.retrieve(&inputs, depth.max(10))?;
            reports.push((variant, evaluate_run(method.name(), &run, &subset)?));
        }
        let base = reports[0].1.clone();
        for (variant, r) in reports {
            rows.push(DeltaRow {
                method: method.name().to_string(),
                variant,
                hit_at_1: r.hit_at_1,
                hit_at_4: r.hit_at_4,
                hit_at_10: r.hit_at_10,
                map_at_10: r.map_at_10,
                drop_hit_at_1: base.hit_at_1 - r.hit_at_1,
                drop_hit_at_4: base.hit_at_4 - r.hit_at_4,
                drop_hit_at_10: base.hit_at_10 - r.hit_at_10,
                drop_map_at_10: base.map_at_10 - r.map_at_10,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeywordOptions {
    pub max_keywords: usize,
    /// Stub extractor: tokens in more than this share of chunks are skipped.
    pub max_df_fraction: f64,
}

impl Default for KeywordOptions {
    fn default() -> Self {
        Self {
            max_keywords: 5,
            max_df_fraction: 0.25,
        }
    }
}

/// Masked and substituted forms of every gold query that has at least one
/// keyword and a synonym for each; other queries are left out of all three
/// variants. Keywords come from `llm` when given, else from the stub
/// extractor. Synonyms come from `lexicon` when given, else from `llm`.
pub fn build_variants(
    gold: &GoldSet,
    idf: &IdfTable,
    options: &KeywordOptions,
    lexicon: Option<&BTreeMap<String, String>>,
    llm: Option<(&dyn LlmClient, &PromptSet)>,
) -> Result<Vec<PerturbedQuery>> {
    if lexicon.is_none() && llm.is_none() {
        return Err(Error::InvalidArgument("synonyms need a lexicon or a model".into()));
    }
    let n = idf.num_chunks();
    let max_df = ((options.max_df_fraction * n as f64).ceil() as usize).max(1);
    let min_idf = idf_value(n, max_df);
    let mut out = Vec::new();
    let mut dropped = 0usize;
    for (q, _) in &gold.queries {
        let keywords = match llm {
            Some((llm, prompts)) if !q.evidence.is_empty() => {
                let mut k = extract_keywords(&q.text, &q.evidence, llm, prompts)?;
                k.truncate(options.max_keywords);
                k
            }
            Some(_) => Vec::new(),
            None => stub_keywords(&q.text, &q.evidence, idf, options.max_keywords, min_idf),
        };
        if keywords.is_empty() {
            dropped += 1;
            continue;
        }
        let synonyms = match (lexicon, llm) {
            (Some(lex), _) => keywords
                .iter()
                .filter_map(|k| lex.get(&k.to_lowercase()).map(|s| (k.clone(), s.clone())))
                .collect(),
            (None, Some((llm, prompts))) => generate_synonyms(&q.text, &keywords, llm, prompts)?,
            (None, None) => unreachable!(),
        };
        let substituted = match substitute_keywords(&q.text, &keywords, &synonyms) {
            Ok(s) => s,
            Err(Error::MissingSynonyms(missing)) => {
                log::info!("{}: no synonym for {}", q.query_id, missing.join(", "));
                dropped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        out.push(PerturbedQuery {
            query_id: q.query_id.clone(),
            original: q.text.clone(),
            masked: mask_keywords(&q.text, &keywords),
            substituted,
            keywords,
            synonyms,
        });
    }
    if dropped > 0 {
        log::info!("{dropped} gold queries left out of the perturbation probe");
    }
    Ok(out)
}

pub fn delta_csv(rows: &[DeltaRow]) -> String {
    let mut out =
        String::from("method,variant,hit@1,hit@4,hit@10,map@10,drop_hit@1,drop_hit@4,drop_hit@10,drop_map@10\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.variant.name(),
            r.hit_at_1,
            r.hit_at_4,
            r.hit_at_10,
            r.map_at_10,
            r.drop_hit_at_1,
            r.drop_hit_at_4,
            r.drop_hit_at_10,
            r.drop_map_at_10
        );
    }
    out
}

pub fn write_delta_csv(path: &Path, rows: &[DeltaRow]) -> Result<()> {
    std::fs::write(path, delta_csv(rows)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
