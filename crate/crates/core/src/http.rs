//! JSON-over-HTTP with bounded exponential backoff.

use std::thread;
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt)
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// POST `body` and decode the JSON reply. 429 and 5xx answers (and transport
/// failures) are retried; other statuses fail immediately.
pub fn post_json(url: &str, api_key: Option<&str>, body: &Value, policy: &RetryPolicy) -> Result<Value> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let mut last_error = String::new();
    for attempt in 0..policy.max_attempts.max(1) {
        if attempt > 0 {
            thread::sleep(policy.delay(attempt - 1));
        }
        let mut request = agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        match request.send(body.to_string()) {
            Ok(mut response) => {
                let status = response.status().as_u16();
                let text = response
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| Error::Http(format!("reading body from {url}: {e}")))?;
                if (200..300).contains(&status) {
                    return serde_json::from_str(&text)
                        .map_err(|e| Error::Http(format!("invalid JSON from {url}: {e}")));
                }
                last_error = format!("{url} answered {status}: {text}");
                if !retryable(status) {
                    break;
                }
                log::warn!("attempt {} of {}: {last_error}", attempt + 1, policy.max_attempts);
            }
            Err(e) => {
                last_error = format!("{url}: {e}");
                log::warn!("attempt {} of {}: {last_error}", attempt + 1, policy.max_attempts);
            }
        }
    }
    Err(Error::Http(last_error))
}
