//! Uniform access to the lexical and dense rankers.

use rayon::prelude::*;

use crate::bm25::{InvertedIndex, RankedList};
use crate::eval::{DenseIndex, Encoder};
use crate::error::Result;

pub trait Retriever: Sync {
    fn name(&self) -> &str;
    /// Top `k` per `(query_id, text)`, in input order.
    fn retrieve(&self, queries: &[(&str, &str)], k: usize) -> Result<Vec<RankedList>>;
}

pub struct Bm25Retriever<'a> {
    pub index: &'a InvertedIndex,
}

impl Retriever for Bm25Retriever<'_> {
    fn name(&self) -> &str {
        "bm25"
    }

    fn retrieve(&self, queries: &[(&str, &str)], k: usize) -> Result<Vec<RankedList>> {
        Ok(queries.par_iter().map(|(id, text)| self.index.search_text(id, text, k)).collect())
    }
}

pub struct DenseRetriever<'a> {
    pub name: String,
    pub encoder: Encoder<'a>,
    pub index: DenseIndex,
}

impl Retriever for DenseRetriever<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn retrieve(&self, queries: &[(&str, &str)], k: usize) -> Result<Vec<RankedList>> {
        let texts: Vec<&str> = queries.iter().map(|(_, t)| *t).collect();
        let vecs = self.encoder.encode(&texts)?;
        let inputs: Vec<(&str, Option<&[f32]>)> = queries.iter().zip(&vecs).map(|((id, _), v)| (*id, v.as_deref())).collect();
        Ok(self.index.search_all(&inputs, k))
    }
}
