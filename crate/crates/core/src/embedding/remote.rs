use serde_json::{json, Value};

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::http::{post_json, RetryPolicy};

/// Client for an embeddings endpoint speaking the common
/// `{"model", "input": [...]}` → `{"data": [{"embedding": [...]}]}` format.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub dim: usize,
    /// Prepended to every text before sending.
    pub instruction: String,
    pub retry: RetryPolicy,
}

impl RemoteEmbedder {
    pub fn from_env(endpoint: &str, model: &str, dim: usize, key_env: &str) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: std::env::var(key_env).ok(),
            dim,
            instruction: String::new(),
            retry: RetryPolicy::default(),
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let mut out: Vec<Option<EmbeddingVector>> = texts
            .iter()
            .map(|t| t.trim().is_empty().then(|| EmbeddingVector::empty(self.dim)))
            .collect();
        let pending: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if pending.is_empty() {
            return Ok(out.into_iter().flatten().collect());
        }
        let input: Vec<String> = pending.iter().map(|&i| format!("{}{}", self.instruction, texts[i])).collect();
        let body = json!({ "model": self.model, "input": input });
        let reply = post_json(&self.endpoint, self.api_key.as_deref(), &body, &self.retry)?;
        let data = reply["data"]
            .as_array()
            .ok_or_else(|| Error::Http("embedding response has no `data` array".into()))?;
        if data.len() != pending.len() {
            return Err(Error::Http(format!("expected {} embeddings, got {}", pending.len(), data.len())));
        }
        for (pos, item) in data.iter().enumerate() {
            let slot = item["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
            let target = *pending
                .get(slot)
                .ok_or_else(|| Error::Http(format!("embedding index {slot} out of range")))?;
            let values = parse_vector(&item["embedding"])?;
            if values.len() != self.dim {
                return Err(Error::Http(format!("embedding has dimension {} (expected {})", values.len(), self.dim)));
            }
            out[target] = Some(EmbeddingVector::new(values));
        }
        out.into_iter()
            .map(|v| v.ok_or_else(|| Error::Http("embedding response skipped an input".into())))
            .collect()
    }
}

fn parse_vector(v: &Value) -> Result<Vec<f32>> {
    v.as_array()
        .ok_or_else(|| Error::Http("embedding is not an array".into()))?
        .iter()
        .map(|x| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .map(|f| f as f32)
                .ok_or_else(|| Error::NonFinite("remote embedding entry".into()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testing::serve;
    use std::time::Duration;

    #[test]
    fn posts_batch_with_instruction() {
        let reply = r#"{"data":[{"index":1,"embedding":[0,1]},{"index":0,"embedding":[1,0]}]}"#;
        let (url, seen) = serve(vec![(200, reply.into())]);
        let mut client = RemoteEmbedder::from_env(&url, "m", 2, "BMEMBED_TEST_UNSET_KEY");
        client.instruction = "query: ".into();
        let out = client.embed_batch(&["a", "", "b"]).unwrap();
        assert_eq!(out[0].values, vec![1.0, 0.0]);
        assert!(out[1].empty_input);
        assert_eq!(out[2].values, vec![0.0, 1.0]);
        let body: Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(body["input"], json!(["query: a", "query: b"]));
    }

    #[test]
    fn failure_after_retries() {
        let (url, _) = serve(vec![(500, "{}".into()), (500, "{}".into())]);
        let mut client = RemoteEmbedder::from_env(&url, "m", 2, "BMEMBED_TEST_UNSET_KEY");
        client.retry = RetryPolicy {
            max_attempts: 2,
            base_delay: Duration::from_millis(1),
        };
        assert!(client.embed("a").is_err());
    }
}
