//! Base embedding providers and the trainable residual adapter.

mod adapter;
mod remote;
mod store;
mod toy;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use adapter::{AdapterParams, Forward};
pub use remote::RemoteEmbedder;
pub use store::{content_key, write_store, PrecomputedStore};
pub use toy::ToyEmbedder;

use crate::error::{Error, Result};

/// A provider's output. `empty_input` marks the zero vector returned for a
/// text with no tokens; such a vector has no direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub empty_input: bool,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self {
            values,
            empty_input: false,
        }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            empty_input: true,
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut v = self.embed_batch(&[text])?;
        v.pop().ok_or_else(|| Error::Http("provider returned no vector".into()))
    }
}

/// Serializable description of a provider, as found in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderSpec {
    Toy {
        #[serde(default = "default_toy_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    Precomputed {
        path: PathBuf,
    },
    Remote {
        endpoint: String,
        model: String,
        dim: usize,
        #[serde(default = "default_key_env")]
        api_key_env: String,
        #[serde(default)]
        instruction: String,
    },
}

fn default_toy_dim() -> usize {
    256
}

fn default_key_env() -> String {
    "BMEMBED_EMBEDDING_API_KEY".to_string()
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Toy {
            dim: default_toy_dim(),
            seed: 0,
        }
    }
}

impl ProviderSpec {
    /// Parse `toy`, `toy:<dim>`, `toy:<dim>:<seed>`, `precomputed:<path>` or
    /// a JSON object.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.starts_with('{') {
            return serde_json::from_str(spec).map_err(|e| Error::InvalidArgument(format!("provider spec: {e}")));
        }
        let bad = || Error::InvalidArgument(format!("unrecognized provider spec `{spec}`"));
        let mut parts = spec.splitn(3, ':');
        match parts.next() {
            Some("toy") => {
                let dim = parts.next().map(|d| d.parse().map_err(|_| bad())).transpose()?.unwrap_or(default_toy_dim());
                let seed = parts.next().map(|s| s.parse().map_err(|_| bad())).transpose()?.unwrap_or(0);
                Ok(ProviderSpec::Toy { dim, seed })
            }
            Some("precomputed") => {
                let rest = spec.strip_prefix("precomputed:").ok_or_else(bad)?;
                Ok(ProviderSpec::Precomputed { path: rest.into() })
            }
            _ => Err(bad()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            ProviderSpec::Toy { dim, seed } => Box::new(ToyEmbedder::new(*dim, *seed)?),
            ProviderSpec::Precomputed { path } => Box::new(PrecomputedStore::load(path)?),
            ProviderSpec::Remote {
                endpoint,
                model,
                dim,
                api_key_env,
                instruction,
            } => {
                let mut r = RemoteEmbedder::from_env(endpoint, model, *dim, api_key_env);
                r.instruction = instruction.clone();
                Box::new(r)
            }
        })
    }
}

/// Remembers every vector it has returned, keyed by text.
pub struct CachedProvider {
    inner: Box<dyn EmbeddingProvider>,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
}

impl CachedProvider {
    pub fn new(inner: Box<dyn EmbeddingProvider>) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl EmbeddingProvider for CachedProvider {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let missing: Vec<&str> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            texts.iter().copied().filter(|t| !cache.contains_key(*t) && seen.insert(*t)).collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            let mut cache = self.cache.lock().expect("cache lock");
            for (t, v) in missing.into_iter().zip(fresh) {
                cache.insert(t.to_string(), v);
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(texts.iter().map(|t| cache[*t].clone()).collect())
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Unit-length copy of `x` in double precision.
pub fn normalize(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(x.iter().map(|v| v / n).collect())
}

pub fn normalize_f32(x: &[f32]) -> Result<Vec<f32>> {
    let wide: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    Ok(normalize(&wide)?.into_iter().map(|v| v as f32).collect())
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Base vectors looked up by id (chunk id or query id).
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Vec<f32>) {
        self.vectors.insert(id.into(), v);
    }

    /// Embed `(id, text)` pairs not already present, in batches.
    pub fn embed_missing<'a>(
        &mut self,
        provider: &dyn EmbeddingProvider,
        items: impl IntoIterator<Item = (&'a str, &'a str)>,
        batch_size: usize,
    ) -> Result<()> {
        let mut pending: Vec<(&str, &str)> = Vec::new();
        let mut queued = std::collections::HashSet::new();
        for (id, text) in items {
            if !self.vectors.contains_key(id) && queued.insert(id) {
                pending.push((id, text));
            }
        }
        for batch in pending.chunks(batch_size.max(1)) {
            let texts: Vec<&str> = batch.iter().map(|(_, t)| *t).collect();
            let vecs = provider.embed_batch(&texts)?;
            if vecs.len() != batch.len() {
                return Err(Error::Http(format!("provider returned {} vectors for {} texts", vecs.len(), batch.len())));
            }
            for ((id, _), v) in batch.iter().zip(vecs) {
                if v.values.len() != self.dim {
                    return Err(Error::InvalidArgument(format!(
                        "provider returned dimension {} (expected {})",
                        v.values.len(),
                        self.dim
                    )));
                }
                if v.values.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("embedding of `{id}`")));
                }
                self.vectors.insert(id.to_string(), v.values);
            }
        }
        Ok(())
    }
}
