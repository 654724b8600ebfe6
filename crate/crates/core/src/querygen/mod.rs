//! Synthetic query generation: event extraction followed by query synthesis.

mod llm;
mod parse;
mod prompts;

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use llm::{split_sentences, ChatCompletionsClient, IdfTable, LlmClient, StubLlm};
pub use parse::{clean_passage, format_events, parse_event_block, parse_questions, DomainEvent, EventType, ParsedQuestion};
pub use prompts::{PromptSet, PromptTemplate};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::rng::SplitMix64;
use crate::text::fold_whitespace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuery {
    pub query_id: String,
    pub text: String,
    pub evidence: Vec<String>,
    #[serde(rename = "doc_id")]
    pub source_doc_id: String,
    #[serde(skip)]
    pub source_event: Option<DomainEvent>,
}

/// True when `passage` occurs in `document` once whitespace runs are folded.
pub fn locates_in(passage: &str, document: &str) -> bool {
    let p = fold_whitespace(passage);
    !p.is_empty() && fold_whitespace(document).contains(&p)
}

pub fn extract_events(document: &Document, llm: &dyn LlmClient, prompts: &PromptSet) -> Result<Vec<DomainEvent>> {
    if document.text.trim().is_empty() {
        return Err(Error::InvalidArgument(format!("document `{}` is empty", document.doc_id)));
    }
    let raw = llm.complete(&prompts.extraction_prompt(&document.text))?;
    if raw.trim().is_empty() {
        log::info!("{}: empty extraction response", document.doc_id);
        return Ok(Vec::new());
    }
    let parsed = parse_event_block(&raw);
    if parsed.is_empty() {
        if raw.to_lowercase().contains("[event]") {
            return Err(Error::LlmParse {
                message: "event labels present but no event could be read".into(),
                raw,
            });
        }
        if raw.contains('[') {
            return Err(Error::LlmParse {
                message: "no [Event]: label".into(),
                raw,
            });
        }
        log::info!("{}: no events extracted", document.doc_id);
        return Ok(Vec::new());
    }
    let mut events = Vec::with_capacity(parsed.len());
    for mut event in parsed {
        let before = event.original_context.len();
        event.original_context.retain(|p| locates_in(p, &document.text));
        if event.original_context.len() < before {
            log::warn!(
                "{}: dropped {} context passage(s) not found in the document",
                document.doc_id,
                before - event.original_context.len()
            );
        }
        if event.original_context.is_empty() {
            log::warn!("{}: dropping event without located evidence: {}", document.doc_id, event.event);
            continue;
        }
        events.push(event);
    }
    Ok(events)
}

pub fn synthesize_queries(
    document: &Document,
    events: &[DomainEvent],
    llm: &dyn LlmClient,
    prompts: &PromptSet,
) -> Result<Vec<SyntheticQuery>> {
    if events.is_empty() {
        return Err(Error::InvalidArgument("no events to synthesize queries for".into()));
    }
    let raw = llm.complete(&prompts.synthesis_prompt(&document.text, &format_events(events)))?;
    let questions = parse_questions(&raw)?;
    let folded: Vec<String> = events.iter().map(|e| fold_whitespace(&e.event)).collect();
    let mut out = Vec::new();
    for (i, q) in questions.into_iter().enumerate() {
        let by_text = q
            .event
            .as_deref()
            .and_then(|label| folded.iter().position(|e| *e == fold_whitespace(label)));
        let Some(ev) = by_text.or(if i < events.len() { Some(i) } else { None }) else {
            log::warn!("{}: question without a matching event dropped: {}", document.doc_id, q.question);
            continue;
        };
        let event = &events[ev];
        out.push(SyntheticQuery {
            query_id: format!("{}-q{:03}", document.doc_id, out.len()),
            text: q.question,
            evidence: event.original_context.clone(),
            source_doc_id: document.doc_id.clone(),
            source_event: Some(event.clone()),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    pub max_queries: Option<usize>,
    pub seed: u64,
}

/// Generate queries for every document (documents run in parallel; output
/// is in document order), drop exact-duplicate texts, then cap the count by
/// a seeded uniform sample that keeps the original order.
pub fn generate_queries(
    docs: &[Document],
    llm: &dyn LlmClient,
    prompts: &PromptSet,
    options: &GenerationOptions,
) -> Result<Vec<SyntheticQuery>> {
    let per_doc: Vec<Result<Vec<SyntheticQuery>>> = docs
        .par_iter()
        .map(|doc| {
            let events = extract_events(doc, llm, prompts)?;
            if events.is_empty() {
                return Ok(Vec::new());
            }
            synthesize_queries(doc, &events, llm, prompts)
        })
        .collect();

    let mut seen = HashSet::new();
    let mut queries = Vec::new();
    for batch in per_doc {
        for q in batch? {
            if seen.insert(q.text.clone()) {
                queries.push(q);
            }
        }
    }
    if let Some(cap) = options.max_queries {
        if queries.len() > cap {
            let mut keep: Vec<usize> = (0..queries.len()).collect();
            SplitMix64::derive(options.seed, b"max-queries").shuffle(&mut keep);
            keep.truncate(cap);
            keep.sort_unstable();
            let mut it = keep.into_iter().peekable();
            queries = queries
                .into_iter()
                .enumerate()
                .filter(|(i, _)| it.next_if_eq(i).is_some())
                .map(|(_, q)| q)
                .collect();
        }
    }
    Ok(queries)
}

pub fn write_queries(path: &Path, queries: &[SyntheticQuery]) -> Result<()> {
    jsonl::write(path, queries)
}

pub fn read_queries(path: &Path) -> Result<Vec<SyntheticQuery>> {
    let queries: Vec<SyntheticQuery> = jsonl::read(path)?;
    let mut seen = HashSet::new();
    for q in &queries {
        if !seen.insert(q.query_id.as_str()) {
            return Err(Error::DuplicateId(q.query_id.clone()));
        }
    }
    Ok(queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm25::{Bm25Params, InvertedIndex};
    use crate::corpus::chunk_corpus;
    use crate::text::TokenizerConfig;
    use std::sync::Arc;

    struct Scripted(Vec<String>, std::sync::Mutex<usize>);

    impl Scripted {
        fn new(replies: &[&str]) -> Self {
            Self(replies.iter().map(|s| s.to_string()).collect(), std::sync::Mutex::new(0))
        }
    }

    impl LlmClient for Scripted {
        fn complete(&self, _prompt: &str) -> Result<String> {
            let mut n = self.1.lock().unwrap();
            let r = self.0[*n % self.0.len()].clone();
            *n += 1;
            Ok(r)
        }
    }

    fn stub_for(docs: &[Document], seed: u64) -> StubLlm {
        let chunks = chunk_corpus(docs, 256, &TokenizerConfig::default()).unwrap();
        let index = InvertedIndex::build(&chunks, Bm25Params::default(), TokenizerConfig::default()).unwrap();
        StubLlm::new(PromptSet::default(), Arc::new(IdfTable::from_index(&index)), seed)
    }

    fn three_sentence_doc() -> Document {
        Document::new(
            "d0",
            "The Zorbex pump ships in May. Its warranty covers thirty months.\nSupport is handled by Quarnel Ltd.",
        )
    }

    #[test]
    fn stub_extracts_each_sentence_of_short_doc() {
        let doc = three_sentence_doc();
        let stub = stub_for(&[doc.clone()], 1);
        let events = extract_events(&doc, &stub, &PromptSet::default()).unwrap();
        let contexts: Vec<&str> = events.iter().map(|e| e.original_context[0].as_str()).collect();
        assert_eq!(
            contexts,
            [
                "The Zorbex pump ships in May.",
                "Its warranty covers thirty months.",
                "Support is handled by Quarnel Ltd."
            ]
        );
    }

    #[test]
    fn stub_query_mentions_rare_terms() {
        let docs = vec![
            three_sentence_doc(),
            Document::new("d1", "The pump ships in May. The warranty covers months. Support is handled."),
        ];
        let stub = stub_for(&docs, 1);
        let prompts = PromptSet::default();
        let events = extract_events(&docs[0], &stub, &prompts).unwrap();
        let queries = synthesize_queries(&docs[0], &events, &stub, &prompts).unwrap();
        assert_eq!(queries.len(), 3);
        assert!(queries[0].text.contains("zorbex"), "{}", queries[0].text);
        assert!(queries[2].text.contains("quarnel"), "{}", queries[2].text);
        assert!(queries[0].text.starts_with("What does the document say about "));
        for q in &queries {
            for e in &q.evidence {
                assert!(locates_in(e, &docs[0].text));
            }
        }
    }

    #[test]
    fn stub_is_deterministic() {
        let docs = vec![three_sentence_doc(), Document::new("d1", "Another text. With two sentences!")];
        let opts = GenerationOptions { max_queries: None, seed: 5 };
        let a = generate_queries(&docs, &stub_for(&docs, 5), &PromptSet::default(), &opts).unwrap();
        let b = generate_queries(&docs, &stub_for(&docs, 5), &PromptSet::default(), &opts).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn max_queries_caps_in_order() {
        let docs = vec![three_sentence_doc(), Document::new("d1", "Another text. With two sentences!")];
        let opts = GenerationOptions { max_queries: Some(2), seed: 5 };
        let q = generate_queries(&docs, &stub_for(&docs, 5), &PromptSet::default(), &opts).unwrap();
        assert_eq!(q.len(), 2);
        assert!(q[0].query_id <= q[1].query_id);
    }

    #[test]
    fn empty_response_gives_no_events() {
        let doc = three_sentence_doc();
        let events = extract_events(&doc, &Scripted::new(&[""]), &PromptSet::default()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn unparseable_response_is_error_with_raw() {
        let doc = three_sentence_doc();
        let err = extract_events(&doc, &Scripted::new(&["[Evt]: garbage"]), &PromptSet::default()).unwrap_err();
        match err {
            Error::LlmParse { raw, .. } => assert_eq!(raw, "[Evt]: garbage"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_event_one_query() {
        let doc = three_sentence_doc();
        let event = DomainEvent {
            event: "Zorbex ships.".into(),
            topic: "shipping".into(),
            original_context: vec!["The Zorbex pump ships in May.".into()],
            event_type: EventType::FineGrained,
        };
        let llm = Scripted::new(&["1. [Event]: Zorbex ships.\n[Question]: When does the Zorbex pump ship?"]);
        let qs = synthesize_queries(&doc, &[event.clone()], &llm, &PromptSet::default()).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].text, "When does the Zorbex pump ship?");
        assert_eq!(qs[0].evidence, event.original_context);
        let err = synthesize_queries(&doc, &[event], &Scripted::new(&["nope"]), &PromptSet::default());
        assert!(matches!(err, Err(Error::LlmParse { .. })));
    }

    #[test]
    fn http_client_round_trip() {
        let reply = serde_json::json!({"choices":[{"message":{"role":"assistant","content":"[Question]: hi?"}}]});
        let (url, seen) = crate::http::testing::serve(vec![(429, "{}".into()), (200, reply.to_string())]);
        let mut client = ChatCompletionsClient::from_env(&url, "gpt-test", "BMEMBED_TEST_UNSET_KEY");
        client.retry.base_delay = std::time::Duration::from_millis(1);
        assert_eq!(client.complete("hello").unwrap(), "[Question]: hi?");
        let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[1]).unwrap();
        assert_eq!(body["model"], "gpt-test");
        assert_eq!(body["messages"][0]["content"], "hello");
    }
}
