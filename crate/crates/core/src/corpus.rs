//! Corpus loading and fixed-window chunking.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::text::{token_spans, TokenizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub text: String,
    #[serde(rename = "meta", default, skip_serializing_if = "BTreeMap::is_empty")]
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

/// A retrieval unit. Offsets count Unicode scalar values in the parent text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub token_count: usize,
    pub char_start: usize,
    pub char_end: usize,
}

pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal:04}")
}

/// Raw line shape, kept separate so `meta` may hold arbitrary JSON.
#[derive(Deserialize)]
struct CorpusRecord {
    id: String,
    text: String,
    #[serde(default)]
    meta: Option<serde_json::Map<String, serde_json::Value>>,
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let records: Vec<CorpusRecord> = jsonl::read(path)?;
    let mut seen = HashSet::new();
    let mut docs = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        if r.text.trim().is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("document `{}` has empty text", r.id),
            });
        }
        if !seen.insert(r.id.clone()) {
            return Err(Error::DuplicateId(r.id));
        }
        let metadata = r
            .meta
            .unwrap_or_default()
            .into_iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => (k, s),
                other => (k, other.to_string()),
            })
            .collect();
        docs.push(Document {
            doc_id: r.id,
            text: r.text,
            metadata,
        });
    }
    Ok(docs)
}

pub fn chunk_document(doc: &Document, chunk_size: usize, config: &TokenizerConfig) -> Vec<Chunk> {
    assert!(chunk_size >= 1, "chunk_size must be at least 1");
    let spans = token_spans(&doc.text, config);
    spans
        .chunks(chunk_size)
        .enumerate()
        .map(|(ordinal, window)| {
            let first = &window[0];
            let last = &window[window.len() - 1];
            Chunk {
                chunk_id: chunk_id(&doc.doc_id, ordinal),
                doc_id: doc.doc_id.clone(),
                text: doc.text[first.byte_start..last.byte_end].to_string(),
                token_count: window.len(),
                char_start: first.char_start,
                char_end: last.char_end,
            }
        })
        .collect()
}

/// Chunk every document; output follows input document order.
pub fn chunk_corpus(docs: &[Document], chunk_size: usize, config: &TokenizerConfig) -> Result<Vec<Chunk>> {
    if chunk_size == 0 {
        return Err(Error::InvalidArgument("chunk_size must be at least 1".into()));
    }
    let per_doc: Vec<Vec<Chunk>> = docs
        .par_iter()
        .map(|d| chunk_document(d, chunk_size, config))
        .collect();
    Ok(per_doc.into_iter().flatten().collect())
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<()> {
    jsonl::write(path, chunks)
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>> {
    let chunks: Vec<Chunk> = jsonl::read(path)?;
    let mut seen = HashSet::new();
    for c in &chunks {
        if !seen.insert(c.chunk_id.as_str()) {
            return Err(Error::DuplicateId(c.chunk_id.clone()));
        }
    }
    Ok(chunks)
}
