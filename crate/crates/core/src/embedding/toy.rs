use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::text::{tokenize, TokenizerConfig};

/// Hashed bag-of-tokens embedder. Every token maps to a fixed pseudo-random
/// unit vector (entries uniform in [-1, 1) from a stream keyed by
/// `(seed, token)`, then normalized); a text is the normalized sum of its
/// token vectors. Pure function of `(text, dim, seed)`.
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    dim: usize,
    seed: u64,
    tokenizer: TokenizerConfig,
}

impl ToyEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            seed,
            tokenizer: TokenizerConfig::default(),
        })
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = SplitMix64::derive(self.seed, token.as_bytes());
        let raw: Vec<f64> = (0..self.dim).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.into_iter().map(|v| v / n).collect()
    }

    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let tokens = tokenize(text, &self.tokenizer);
        if tokens.is_empty() {
            return EmbeddingVector::empty(self.dim);
        }
        let mut sum = vec![0.0f64; self.dim];
        for t in &tokens {
            for (s, v) in sum.iter_mut().zip(self.token_vector(t)) {
                *s += v;
            }
        }
        match super::normalize(&sum) {
            Ok(unit) => EmbeddingVector::new(unit.into_iter().map(|v| v as f32).collect()),
            Err(_) => EmbeddingVector::empty(self.dim),
        }
    }
}

impl EmbeddingProvider for ToyEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine_similarity, norm};

    #[test]
    fn repeated_token_same_direction() {
        let e = ToyEmbedder::new(256, 1).unwrap();
        let a = e.embed("apple apple").unwrap();
        let b = e.embed("apple").unwrap();
        assert!((cosine_similarity(&a.values, &b.values).unwrap() - 1.0).abs() < 1e-6);
        assert!((norm(&a.values) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let e = ToyEmbedder::new(256, 42).unwrap();
        assert_eq!(e.embed("the zorbex pump").unwrap(), e.embed("the zorbex pump").unwrap());
        let other = ToyEmbedder::new(256, 43).unwrap();
        assert_ne!(e.embed("zorbex").unwrap(), other.embed("zorbex").unwrap());
    }

    #[test]
    fn empty_text_is_flagged() {
        let e = ToyEmbedder::new(8, 0).unwrap();
        let v = e.embed(" ,, ").unwrap();
        assert!(v.empty_input);
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn disjoint_texts_nearly_orthogonal() {
        // Empirical check over 1,000 seeds.
        let mut large = 0;
        for seed in 0..1000 {
            let e = ToyEmbedder::new(256, seed).unwrap();
            let c = cosine_similarity(&e.embed("alpha").unwrap().values, &e.embed("omega").unwrap().values).unwrap();
            if c.abs() >= 0.25 {
                large += 1;
            }
        }
        assert!(large <= 5, "{large} of 1000 draws had |cos| >= 0.25");
    }
}
