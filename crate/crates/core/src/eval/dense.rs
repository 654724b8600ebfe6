//! Exact cosine retrieval over chunk embeddings.

use rayon::prelude::*;

use crate::bm25::{RankedEntry, RankedList};
use crate::embedding::{normalize_f32, AdapterParams, EmbeddingProvider, EmbeddingTable};
use crate::error::{Error, Result};

/// A base provider, optionally followed by the adapter. Every output is
/// unit length; both paths normalize the same double-precision vector, so a
/// zero adapter reproduces the base vectors bit for bit.
#[derive(Clone, Copy)]
pub struct Encoder<'a> {
    pub provider: &'a dyn EmbeddingProvider,
    pub adapter: Option<&'a AdapterParams>,
}

impl<'a> Encoder<'a> {
    pub fn base(provider: &'a dyn EmbeddingProvider) -> Self {
        Self { provider, adapter: None }
    }

    pub fn adapted(provider: &'a dyn EmbeddingProvider, adapter: &'a AdapterParams) -> Self {
        Self {
            provider,
            adapter: Some(adapter),
        }
    }

    /// Apply the output transform to a base vector; `None` for vectors with
    /// no direction.
    pub fn transform(&self, base: &[f32]) -> Result<Option<Vec<f32>>> {
        if base.iter().all(|&v| v == 0.0) {
            return Ok(None);
        }
        match self.adapter {
            Some(a) => match a.adapt(base) {
                Ok(v) => Ok(Some(v)),
                Err(Error::DegenerateAdapter) => Ok(None),
                Err(e) => Err(e),
            },
            None => Ok(Some(normalize_f32(base)?)),
        }
    }

    pub fn encode(&self, texts: &[&str]) -> Result<Vec<Option<Vec<f32>>>> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(64) {
            for v in self.provider.embed_batch(batch)? {
                out.push(self.transform(&v.values)?);
            }
        }
        Ok(out)
    }

    /// Transform cached base vectors for `ids`.
    pub fn encode_cached(&self, table: &EmbeddingTable, ids: &[&str]) -> Result<Vec<Option<Vec<f32>>>> {
        ids.iter()
            .map(|id| {
                let base = table
                    .get(id)
                    .ok_or_else(|| Error::InvalidArgument(format!("no base embedding for `{id}`")))?;
                self.transform(base)
            })
            .collect()
    }
}

/// Unit chunk vectors in ascending chunk-id order.
#[derive(Debug, Clone)]
pub struct DenseIndex {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
}

impl DenseIndex {
    pub fn build(encoder: &Encoder<'_>, table: &EmbeddingTable, chunk_ids: &[&str]) -> Result<Self> {
        let mut ids: Vec<&str> = chunk_ids.to_vec();
        ids.sort_unstable();
        let encoded = encoder.encode_cached(table, &ids)?;
        let mut out_ids = Vec::new();
        let mut vectors = Vec::new();
        for (id, v) in ids.into_iter().zip(encoded) {
            if let Some(v) = v {
                out_ids.push(id.to_string());
                vectors.push(v);
            }
        }
        Ok(Self { ids: out_ids, vectors })
    }

    pub fn vector_refs(&self) -> Vec<&[f32]> {
        self.vectors.iter().map(Vec::as_slice).collect()
    }

    /// Top `k` by cosine; ties by ascending chunk id.
    pub fn search(&self, query_id: &str, query: Option<&[f32]>, k: usize) -> RankedList {
        let Some(q) = query else {
            return RankedList {
                query_id: query_id.to_string(),
                entries: Vec::new(),
            };
        };
        let mut scored: Vec<(f64, usize)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (crate::embedding::dot(q, v).clamp(-1.0, 1.0), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
        RankedList {
            query_id: query_id.to_string(),
            entries: scored
                .into_iter()
                .map(|(score, i)| RankedEntry {
                    chunk_id: self.ids[i].clone(),
                    score,
                })
                .collect(),
        }
    }

    pub fn search_all(&self, queries: &[(&str, Option<&[f32]>)], k: usize) -> Vec<RankedList> {
        queries.par_iter().map(|(id, v)| self.search(id, *v, k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine_similarity, ToyEmbedder};
    use crate::rng::SplitMix64;

    #[test]
    fn matches_brute_force() {
        let mut rng = SplitMix64::new(8);
        let d = 16;
        let mut table = EmbeddingTable::new(d);
        let ids: Vec<String> = (0..300).map(|i| format!("c{i:03}")).collect();
        for id in &ids {
            table.insert(id.clone(), (0..d).map(|_| rng.next_f64() as f32 - 0.5).collect());
        }
        let toy = ToyEmbedder::new(d, 0).unwrap();
        let enc = Encoder::base(&toy);
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let index = DenseIndex::build(&enc, &table, &refs).unwrap();
        for _ in 0..5 {
            let q: Vec<f32> = (0..d).map(|_| rng.next_f64() as f32 - 0.5).collect();
            let qu = enc.transform(&q).unwrap().unwrap();
            let got = index.search("q", Some(&qu), 10);
            let mut brute: Vec<(f64, &str)> = Vec::new();
            for id in &ids {
                brute.push((cosine_similarity(&q, table.get(id).unwrap()).unwrap(), id));
            }
            brute.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
            let want: Vec<&str> = brute.iter().take(10).map(|x| x.1).collect();
            assert_eq!(got.chunk_ids(), want);
        }
    }

    #[test]
    fn zero_adapter_is_bit_identical() {
        let toy = ToyEmbedder::new(32, 1).unwrap();
        let zero = AdapterParams::zeros(32);
        let texts = ["valve torque spec", "PHX-121 assembly notes", "x"];
        let a = Encoder::base(&toy).encode(&texts).unwrap();
        let b = Encoder::adapted(&toy, &zero).encode(&texts).unwrap();
        assert_eq!(a, b);
    }
}
