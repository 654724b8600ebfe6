//! Prompt templates with `{placeholder}` slots.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)
            .map(Self::new)
            .map_err(|e| Error::io(path, e))
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitute `{name}` slots; slots are replaced in the given order.
    pub fn fill(&self, vars: &[(&str, &str)]) -> String {
        // Split on the first slot and recurse so a value that itself contains
        // `{other}` is never substituted again.
        fn go(text: &str, vars: &[(&str, &str)]) -> String {
            let Some(((name, value), rest)) = vars.split_first() else {
                return text.to_string();
            };
            let slot = format!("{{{name}}}");
            text.split(&slot)
                .map(|part| go(part, rest))
                .collect::<Vec<_>>()
                .join(value)
        }
        go(&self.text, vars)
    }

    /// Recover `{doc}` from a prompt produced by [`fill`](Self::fill).
    pub fn unfill_doc(&self, prompt: &str) -> Option<String> {
        let (pre, post) = self.text.split_once("{doc}")?;
        if post.contains("{event}") {
            return None;
        }
        let inner = prompt.strip_prefix(pre)?.strip_suffix(post)?;
        Some(inner.to_string())
    }

    /// Recover `({doc}, {event})` from a filled synthesis prompt.
    pub fn unfill_doc_event(&self, prompt: &str) -> Option<(String, String)> {
        let (pre, rest) = self.text.split_once("{doc}")?;
        let (mid, post) = rest.split_once("{event}")?;
        let inner = prompt.strip_prefix(pre)?.strip_suffix(post)?;
        let at = inner.rfind(mid)?;
        Some((inner[..at].to_string(), inner[at + mid.len()..].to_string()))
    }
}

/// The four prompts used by query generation and query perturbation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub extraction: PromptTemplate,
    pub synthesis: PromptTemplate,
    pub keywords: PromptTemplate,
    pub synonyms: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            extraction: PromptTemplate::new(include_str!("../../prompts/event_extraction.txt")),
            synthesis: PromptTemplate::new(include_str!("../../prompts/query_synthesis.txt")),
            keywords: PromptTemplate::new(include_str!("../../prompts/keyword_extraction.txt")),
            synonyms: PromptTemplate::new(include_str!("../../prompts/synonym_generation.txt")),
        }
    }
}

impl PromptSet {
    /// Load `event_extraction.txt`, `query_synthesis.txt`,
    /// `keyword_extraction.txt` and `synonym_generation.txt` from `dir`;
    /// missing files fall back to the built-in templates.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        let load = |name: &str, slot: &mut PromptTemplate| -> Result<()> {
            let path = dir.join(name);
            if path.exists() {
                *slot = PromptTemplate::from_file(&path)?;
            }
            Ok(())
        };
        load("event_extraction.txt", &mut set.extraction)?;
        load("query_synthesis.txt", &mut set.synthesis)?;
        load("keyword_extraction.txt", &mut set.keywords)?;
        load("synonym_generation.txt", &mut set.synonyms)?;
        Ok(set)
    }

    pub fn extraction_prompt(&self, doc: &str) -> String {
        self.extraction.fill(&[("doc", doc)])
    }

    pub fn synthesis_prompt(&self, doc: &str, events: &str) -> String {
        self.synthesis.fill(&[("doc", doc), ("event", events)])
    }
}
