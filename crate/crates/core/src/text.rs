//! Deterministic tokenization: maximal runs of Unicode letters and digits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    #[serde(default = "default_lowercase")]
    pub lowercase: bool,
}

fn default_lowercase() -> bool {
    true
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { lowercase: true }
    }
}

/// A token together with where it sits in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token: String,
    pub byte_start: usize,
    pub byte_end: usize,
    pub char_start: usize,
    pub char_end: usize,
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    token_spans(text, config).into_iter().map(|t| t.token).collect()
}

pub fn token_spans(text: &str, config: &TokenizerConfig) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut char_idx = 0usize;

    let mut flush = |start: (usize, usize), byte_end: usize, char_end: usize| {
        let raw = &text[start.0..byte_end];
        let token = if config.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };
        spans.push(TokenSpan {
            token,
            byte_start: start.0,
            byte_end,
            char_start: start.1,
            char_end,
        });
    };

    for (byte_idx, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if current.is_none() {
                current = Some((byte_idx, char_idx));
            }
        } else if let Some(start) = current.take() {
            flush(start, byte_idx, char_idx);
        }
        char_idx += 1;
    }
    if let Some(start) = current {
        flush(start, text.len(), char_idx);
    }
    spans
}

/// Collapse every whitespace run to one space and trim the ends.
pub fn fold_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s, &TokenizerConfig::default())
    }

    #[test]
    fn empty_input() {
        assert!(toks("").is_empty());
        assert!(toks("  -- ,, ").is_empty());
    }

    #[test]
    fn product_code() {
        assert_eq!(toks("Product Code: PHX-121"), ["product", "code", "phx", "121"]);
    }

    #[test]
    fn case_folding() {
        assert_eq!(toks("Apple apple"), ["apple", "apple"]);
        let keep = TokenizerConfig { lowercase: false };
        assert_eq!(tokenize("Apple apple", &keep), ["Apple", "apple"]);
    }

    #[test]
    fn unicode_runs_and_offsets() {
        let spans = token_spans("café, naïve 42", &TokenizerConfig::default());
        let tokens: Vec<_> = spans.iter().map(|s| s.token.as_str()).collect();
        assert_eq!(tokens, ["café", "naïve", "42"]);
        assert_eq!((spans[1].char_start, spans[1].char_end), (6, 11));
        assert_eq!(&"café, naïve 42"[spans[1].byte_start..spans[1].byte_end], "naïve");
    }

    #[test]
    fn mask_literal_reduces_to_mask() {
        assert_eq!(toks("at [MASK] when"), ["at", "mask", "when"]);
    }
}
