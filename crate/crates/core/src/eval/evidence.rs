//! Mapping gold evidence spans onto chunks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::corpus::Chunk;
use crate::text::{tokenize, TokenizerConfig};

pub const DEFAULT_THETA: f64 = 0.6;

/// Token streams of every document, rebuilt from its chunks, with the owning
/// chunk of each token.
pub struct ChunkTokens<'a> {
    docs: Vec<DocTokens<'a>>,
    bags: Vec<(&'a str, HashMap<String, usize>)>,
}

struct DocTokens<'a> {
    tokens: Vec<String>,
    owner: Vec<&'a str>,
    first: HashMap<String, Vec<usize>>,
}

impl<'a> ChunkTokens<'a> {
    pub fn new(chunks: &'a [Chunk], tokenizer: &TokenizerConfig) -> Self {
        let mut by_doc: BTreeMap<&str, Vec<&Chunk>> = BTreeMap::new();
        for c in chunks {
            by_doc.entry(c.doc_id.as_str()).or_default().push(c);
        }
        let mut docs = Vec::new();
        let mut bags = Vec::new();
        for (_, mut list) in by_doc {
            list.sort_by_key(|c| c.char_start);
            let mut doc = DocTokens {
                tokens: Vec::new(),
                owner: Vec::new(),
                first: HashMap::new(),
            };
            for c in list {
                let toks = tokenize(&c.text, tokenizer);
                let mut bag = HashMap::new();
                for t in toks {
                    *bag.entry(t.clone()).or_insert(0) += 1;
                    doc.first.entry(t.clone()).or_default().push(doc.tokens.len());
                    doc.tokens.push(t);
                    doc.owner.push(c.chunk_id.as_str());
                }
                bags.push((c.chunk_id.as_str(), bag));
            }
            docs.push(doc);
        }
        Self { docs, bags }
    }

    /// Chunks relevant to one span. Located spans use positional overlap:
    /// a chunk qualifies when it holds at least `theta` of the span's tokens,
    /// and if none does, the chunk holding the most does. Spans that cannot be
    /// located fall back to bag-of-token overlap.
    pub fn match_span(&self, span_tokens: &[String], theta: f64) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if span_tokens.is_empty() {
            return out;
        }
        let need = theta * span_tokens.len() as f64;
        let mut located = false;
        for doc in &self.docs {
            let Some(starts) = doc.first.get(&span_tokens[0]) else {
                continue;
            };
            for &s in starts {
                if s + span_tokens.len() > doc.tokens.len() || doc.tokens[s..s + span_tokens.len()] != *span_tokens {
                    continue;
                }
                located = true;
                let mut counts: Vec<(&str, usize)> = Vec::new();
                for &owner in &doc.owner[s..s + span_tokens.len()] {
                    match counts.last_mut() {
                        Some((id, n)) if *id == owner => *n += 1,
                        _ => counts.push((owner, 1)),
                    }
                }
                let passing: Vec<&str> = counts.iter().filter(|(_, n)| *n as f64 >= need).map(|(id, _)| *id).collect();
                if passing.is_empty() {
                    let best = counts.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0))).unwrap();
                    out.insert(best.0.to_string());
                } else {
                    out.extend(passing.into_iter().map(str::to_string));
                }
            }
        }
        if located {
            return out;
        }
        let mut span_bag: HashMap<&str, usize> = HashMap::new();
        for t in span_tokens {
            *span_bag.entry(t.as_str()).or_insert(0) += 1;
        }
        for (id, bag) in &self.bags {
            let shared: usize = span_bag.iter().map(|(t, n)| (*n).min(*bag.get(*t).unwrap_or(&0))).sum();
            if shared as f64 >= need {
                out.insert(id.to_string());
            }
        }
        out
    }
}

/// Union of the chunks matched by each span; empty means unmatchable.
pub fn match_evidence(spans: &[String], index: &ChunkTokens<'_>, tokenizer: &TokenizerConfig, theta: f64) -> BTreeSet<String> {
    spans
        .iter()
        .flat_map(|s| index.match_span(&tokenize(s, tokenizer), theta))
        .collect()
}
