//! Okapi BM25 over an in-memory inverted index.
//!
//! ```text
//! BM25(d, q) = Σ_{t ∈ q} IDF(t) · f(t,d)·(k1 + 1) / (f(t,d) + k1·(1 − b + b·|d|/avgdl))
//! IDF(t)     = ln((N − df(t) + 0.5) / (df(t) + 0.5) + 1)
//! ```
//!
//! Query terms are a multiset: a term repeated in the query contributes once
//! per occurrence. The IDF variant above is never negative.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::text::{tokenize, TokenizerConfig};

pub const INDEX_FORMAT: &str = "bmembed-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(Error::InvalidArgument(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidArgument(format!("b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub chunk_id: String,
    pub score: f64,
}

/// Top-k chunks for one query, descending score, ties by ascending chunk id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn chunk_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.chunk_id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    params: Bm25Params,
    tokenizer: TokenizerConfig,
    /// Sorted ascending; postings refer to positions in this list.
    chunk_ids: Vec<String>,
    lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    avg_length: f64,
    positions: HashMap<String, u32>,
}

/// Contribution of one query-term occurrence to a chunk's score.
#[inline]
pub fn term_score(params: &Bm25Params, idf: f64, tf: f64, length: f64, avg_length: f64) -> f64 {
    let norm = length / avg_length;
    idf * (tf * (params.k1 + 1.0)) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

#[inline]
pub fn idf_value(n: usize, df: usize) -> f64 {
    let n = n as f64;
    let df = df as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

impl InvertedIndex {
    pub fn build(chunks: &[Chunk], params: Bm25Params, tokenizer: TokenizerConfig) -> Result<Self> {
        if chunks.is_empty() {
            return Err(Error::EmptyIndex);
        }
        params.validate()?;
        let mut order: Vec<&Chunk> = chunks.iter().collect();
        order.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
        for pair in order.windows(2) {
            if pair[0].chunk_id == pair[1].chunk_id {
                return Err(Error::DuplicateId(pair[0].chunk_id.clone()));
            }
        }

        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut lengths = Vec::with_capacity(order.len());
        for (pos, chunk) in order.iter().enumerate() {
            let tokens = tokenize(&chunk.text, &tokenizer);
            lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((pos as u32, count));
            }
        }
        let chunk_ids: Vec<String> = order.iter().map(|c| c.chunk_id.clone()).collect();
        Self::from_parts(params, tokenizer, chunk_ids, lengths, postings)
    }

    fn from_parts(
        params: Bm25Params,
        tokenizer: TokenizerConfig,
        chunk_ids: Vec<String>,
        lengths: Vec<u32>,
        postings: BTreeMap<String, Vec<(u32, u32)>>,
    ) -> Result<Self> {
        let total: u64 = lengths.iter().map(|&l| l as u64).sum();
        let avg_length = total as f64 / lengths.len() as f64;
        if !(avg_length > 0.0) {
            return Err(Error::InvalidArgument(
                "indexed chunks contain no tokens".into(),
            ));
        }
        let positions = chunk_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Ok(Self {
            params,
            tokenizer,
            chunk_ids,
            lengths,
            postings,
            avg_length,
            positions,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.tokenizer
    }

    pub fn num_chunks(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn avg_length(&self) -> f64 {
        self.avg_length
    }

    pub fn chunk_ids(&self) -> &[String] {
        &self.chunk_ids
    }

    pub fn chunk_length(&self, chunk_id: &str) -> Option<u32> {
        self.positions.get(chunk_id).map(|&p| self.lengths[p as usize])
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[(u32, u32)])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf_value(self.num_chunks(), self.df(term))
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, &self.tokenizer)
    }

    pub fn bm25_score(&self, query_tokens: &[String], chunk_id: &str) -> Result<f64> {
        let pos = *self
            .positions
            .get(chunk_id)
            .ok_or_else(|| Error::UnknownChunk(chunk_id.to_string()))?;
        let length = self.lengths[pos as usize] as f64;
        let mut score = 0.0;
        for term in query_tokens {
            let postings = self.postings(term);
            if let Ok(i) = postings.binary_search_by_key(&pos, |&(p, _)| p) {
                let idf = idf_value(self.num_chunks(), postings.len());
                score += term_score(&self.params, idf, postings[i].1 as f64, length, self.avg_length);
            }
        }
        Ok(score)
    }

    /// Top-k by BM25; chunks scoring zero are left out.
    pub fn search(&self, query_tokens: &[String], k: usize) -> RankedList {
        let mut scores = vec![0.0f64; self.num_chunks()];
        let mut touched = vec![false; self.num_chunks()];
        for term in query_tokens {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = idf_value(self.num_chunks(), postings.len());
            for &(pos, tf) in postings {
                let length = self.lengths[pos as usize] as f64;
                scores[pos as usize] += term_score(&self.params, idf, tf as f64, length, self.avg_length);
                touched[pos as usize] = true;
            }
        }
        let mut hits: Vec<(u32, f64)> = touched
            .iter()
            .enumerate()
            .filter(|(i, &t)| t && scores[*i] > 0.0)
            .map(|(i, _)| (i as u32, scores[i]))
            .collect();
        // Positions are in chunk-id order, so ascending position breaks ties.
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        RankedList {
            query_id: String::new(),
            entries: hits
                .into_iter()
                .map(|(pos, score)| RankedEntry {
                    chunk_id: self.chunk_ids[pos as usize].clone(),
                    score,
                })
                .collect(),
        }
    }

    pub fn search_text(&self, query_id: &str, text: &str, k: usize) -> RankedList {
        let mut list = self.search(&self.tokenize(text), k);
        list.query_id = query_id.to_string();
        list
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = IndexHeader {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            k1: self.params.k1,
            b: self.params.b,
            lowercase: self.tokenizer.lowercase,
            num_chunks: self.num_chunks(),
            num_terms: self.num_terms(),
        };
        let mut line = |v: serde_json::Value| -> Result<()> {
            writeln!(w, "{v}").map_err(|e| Error::io(path, e))
        };
        line(serde_json::to_value(&header).expect("header serializes"))?;
        for (id, len) in self.chunk_ids.iter().zip(&self.lengths) {
            line(serde_json::json!({ "chunk_id": id, "length": len }))?;
        }
        for (term, list) in &self.postings {
            line(serde_json::json!({ "term": term, "postings": list }))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let bad = |line: usize, message: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            message,
        };
        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty index file".into()))?;
        let first = first.map_err(|e| Error::io(path, e))?;
        let header: IndexHeader =
            serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(Error::Format(format!(
                "expected {INDEX_FORMAT} v{INDEX_VERSION}, found {} v{}",
                header.format, header.version
            )));
        }
        let mut chunk_ids = Vec::with_capacity(header.num_chunks);
        let mut lengths = Vec::with_capacity(header.num_chunks);
        let mut postings = BTreeMap::new();
        for (idx, text) in lines {
            let text = text.map_err(|e| Error::io(path, e))?;
            if chunk_ids.len() < header.num_chunks {
                let rec: ChunkLine = serde_json::from_str(&text).map_err(|e| bad(idx + 1, e.to_string()))?;
                chunk_ids.push(rec.chunk_id);
                lengths.push(rec.length);
            } else {
                let rec: PostingLine = serde_json::from_str(&text).map_err(|e| bad(idx + 1, e.to_string()))?;
                postings.insert(rec.term, rec.postings);
            }
        }
        if chunk_ids.len() != header.num_chunks || postings.len() != header.num_terms {
            return Err(Error::Format("index file truncated".into()));
        }
        Self::from_parts(
            Bm25Params { k1: header.k1, b: header.b },
            TokenizerConfig { lowercase: header.lowercase },
            chunk_ids,
            lengths,
            postings,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    k1: f64,
    b: f64,
    lowercase: bool,
    num_chunks: usize,
    num_terms: usize,
}

#[derive(Deserialize)]
struct ChunkLine {
    chunk_id: String,
    length: u32,
}

#[derive(Deserialize)]
struct PostingLine {
    term: String,
    postings: Vec<(u32, u32)>,
}
