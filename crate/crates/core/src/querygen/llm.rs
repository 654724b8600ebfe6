//! Completion clients: a remote chat-completions endpoint and an offline stub.

use std::collections::HashMap;
use std::sync::Arc;

use serde_json::json;

use super::parse::{format_events, parse_event_block, DomainEvent, EventType};
use super::prompts::PromptSet;
use crate::bm25::{idf_value, InvertedIndex};
use crate::error::{Error, Result};
use crate::http::{post_json, RetryPolicy};
use crate::rng::derive_seed;
use crate::text::{tokenize, TokenizerConfig};

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// OpenAI-style `/chat/completions` client.
#[derive(Debug, Clone)]
pub struct ChatCompletionsClient {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
}

impl ChatCompletionsClient {
    /// Reads the key from `api_key_env` when that variable is set.
    pub fn from_env(endpoint: &str, model: &str, api_key_env: &str) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: std::env::var(api_key_env).ok(),
            retry: RetryPolicy::default(),
        }
    }
}

impl LlmClient for ChatCompletionsClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let reply = post_json(&self.endpoint, self.api_key.as_deref(), &body, &self.retry)?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Http(format!("no choices[0].message.content in reply: {reply}")))
    }
}

/// Document-frequency table used by the offline stubs to weight terms.
#[derive(Debug, Clone, Default)]
pub struct IdfTable {
    num_chunks: usize,
    df: HashMap<String, usize>,
    tokenizer: TokenizerConfig,
}

impl IdfTable {
    pub fn from_index(index: &InvertedIndex) -> Self {
        Self {
            num_chunks: index.num_chunks(),
            df: index_terms(index),
            tokenizer: *index.tokenizer(),
        }
    }

    pub fn num_chunks(&self) -> usize {
        self.num_chunks
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf_value(self.num_chunks, self.df.get(term).copied().unwrap_or(0))
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, &self.tokenizer)
    }

    /// Distinct tokens of `text` by descending idf, ties by first occurrence.
    pub fn ranked_terms(&self, text: &str) -> Vec<(String, f64)> {
        let mut seen = std::collections::HashSet::new();
        let mut terms: Vec<(usize, String, f64)> = self
            .tokenize(text)
            .into_iter()
            .enumerate()
            .filter(|(_, t)| seen.insert(t.clone()))
            .map(|(i, t)| {
                let w = self.idf(&t);
                (i, t, w)
            })
            .collect();
        terms.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        terms.into_iter().map(|(_, t, w)| (t, w)).collect()
    }
}

fn index_terms(index: &InvertedIndex) -> HashMap<String, usize> {
    index.terms().map(|(t, postings)| (t.to_string(), postings.len())).collect()
}

/// Split on `.`, `!`, `?` followed by whitespace, and on blank lines.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        current.push(c);
        let next = chars.get(i + 1).copied();
        let ends = matches!(c, '.' | '!' | '?') && next.map_or(true, char::is_whitespace);
        let paragraph = c == '\n' && next == Some('\n');
        if ends || paragraph {
            let s = crate::text::fold_whitespace(&current);
            if s.chars().any(char::is_alphanumeric) {
                out.push(s);
            }
            current.clear();
        }
        i += 1;
    }
    let s = crate::text::fold_whitespace(&current);
    if s.chars().any(char::is_alphanumeric) {
        out.push(s);
    }
    out
}

/// Offline stand-in for the remote model. It answers the shipped extraction
/// and synthesis prompts by rule:
///
/// * extraction: the three sentences with the highest summed token idf
///   become fine-grained events, listed in document order, each quoting
///   itself as original context;
/// * synthesis: one question per event, "What does the document say about
///   <a> and <b>?" with the two highest-idf terms of the event's context.
///
/// Output is a pure function of the prompt, the idf table and the seed; the
/// seed only breaks exact ties between sentence scores.
#[derive(Debug, Clone)]
pub struct StubLlm {
    prompts: PromptSet,
    idf: Arc<IdfTable>,
    seed: u64,
    events_per_doc: usize,
}

impl StubLlm {
    pub fn new(prompts: PromptSet, idf: Arc<IdfTable>, seed: u64) -> Self {
        Self {
            prompts,
            idf,
            seed,
            events_per_doc: 3,
        }
    }

    pub fn extract(&self, doc: &str) -> Vec<DomainEvent> {
        let sentences = split_sentences(doc);
        let mut scored: Vec<(usize, f64, u64)> = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let score: f64 = self.idf.tokenize(s).iter().map(|t| self.idf.idf(t)).sum();
                (i, score, derive_seed(self.seed, s.as_bytes()))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)));
        let mut picked: Vec<usize> = scored.iter().take(self.events_per_doc).map(|s| s.0).collect();
        picked.sort_unstable();
        picked
            .into_iter()
            .map(|i| {
                let sentence = &sentences[i];
                let topic = self
                    .idf
                    .ranked_terms(sentence)
                    .into_iter()
                    .next()
                    .map(|(t, _)| t)
                    .unwrap_or_default();
                DomainEvent {
                    event: sentence.clone(),
                    topic,
                    original_context: vec![sentence.clone()],
                    event_type: EventType::FineGrained,
                }
            })
            .collect()
    }

    pub fn question_for(&self, event: &DomainEvent) -> String {
        let source = event.original_context.first().unwrap_or(&event.event);
        let terms: Vec<String> = self.idf.ranked_terms(source).into_iter().take(2).map(|(t, _)| t).collect();
        let about = match terms.as_slice() {
            [] => event.topic.clone(),
            [a] => a.clone(),
            [a, b, ..] => format!("{a} and {b}"),
        };
        format!("What does the document say about {about}?")
    }
}

impl LlmClient for StubLlm {
    fn complete(&self, prompt: &str) -> Result<String> {
        if let Some(doc) = self.prompts.extraction.unfill_doc(prompt) {
            return Ok(format_events(&self.extract(&doc)));
        }
        if let Some((_, events)) = self.prompts.synthesis.unfill_doc_event(prompt) {
            let events = parse_event_block(&events);
            let mut out = String::new();
            for (i, e) in events.iter().enumerate() {
                out.push_str(&format!(
                    "{}. [Event]: {}\n[Question]: {}\n\n",
                    i + 1,
                    e.event,
                    self.question_for(e)
                ));
            }
            return Ok(out);
        }
        Err(Error::InvalidArgument(
            "stub model only answers the configured extraction and synthesis prompts".into(),
        ))
    }
}
