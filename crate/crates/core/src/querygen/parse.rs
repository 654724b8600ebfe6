//! Tolerant parsing of bracket-labelled LLM output (`[Event]: ...`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventType {
    FineGrained,
    General,
}

impl EventType {
    fn parse(raw: &str) -> Self {
        if raw.to_lowercase().contains("general") {
            EventType::General
        } else {
            EventType::FineGrained
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EventType::FineGrained => "Fine-grained",
            EventType::General => "General",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainEvent {
    pub event: String,
    pub topic: String,
    pub original_context: Vec<String>,
    pub event_type: EventType,
}

/// Split text into records of `(label, value)` fields. A record ends where a
/// label repeats, so field order inside a record does not matter.
pub(crate) fn labelled_records(raw: &str) -> Vec<Vec<(String, String)>> {
    let labels = find_labels(raw);
    let mut records: Vec<Vec<(String, String)>> = Vec::new();
    let mut current: Vec<(String, String)> = Vec::new();
    for (i, (_, end, name)) in labels.iter().enumerate() {
        let value_end = labels.get(i + 1).map(|l| l.0).unwrap_or(raw.len());
        let value = clean_value(&raw[*end..value_end]);
        if current.iter().any(|(n, _)| n == name) {
            records.push(std::mem::take(&mut current));
        }
        current.push((name.clone(), value));
    }
    if !current.is_empty() {
        records.push(current);
    }
    records
}

/// `(label_start, value_start, normalized_name)` for every `[Label]:`.
fn find_labels(raw: &str) -> Vec<(usize, usize, String)> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            if let Some(close) = raw[i + 1..].find(']') {
                let name = &raw[i + 1..i + 1 + close];
                let after = i + 1 + close + 1;
                let valid_name = !name.is_empty()
                    && name.len() <= 40
                    && name.chars().all(|c| c.is_ascii_alphabetic() || c == ' ' || c == '-' || c == '_');
                if valid_name && raw[after..].starts_with(':') {
                    out.push((i, after + 1, normalize_label(name)));
                    i = after + 1;
                    continue;
                }
            }
        }
        i += 1;
    }
    out
}

fn normalize_label(name: &str) -> String {
    let lower = name.trim().to_lowercase().replace(['_', '-'], " ");
    match lower.as_str() {
        // The synthesis prompt itself misspells the label.
        "envent" => "event".to_string(),
        _ => lower,
    }
}

fn is_numbering(line: &str) -> bool {
    let digits = line.trim().trim_end_matches(['.', ')']);
    !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
}

/// Trim a field value and drop trailing block numbering or headings that
/// belong to the next record.
fn clean_value(raw: &str) -> String {
    let mut lines: Vec<&str> = raw.lines().collect();
    while let Some(last) = lines.last() {
        let t = last.trim();
        if t.is_empty() || t.starts_with('#') || is_numbering(t) || t.chars().all(|c| c == '-' || c == '*') {
            lines.pop();
        } else {
            break;
        }
    }
    lines.join("\n").trim().to_string()
}

fn strip_list_marker(line: &str) -> Option<&str> {
    let t = line.trim_start();
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    let rest = &t[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest.trim_start())
    } else {
        None
    }
}

/// Remove quotes, ellipses and list markers around a quoted passage.
pub fn clean_passage(raw: &str) -> String {
    let mut s = raw.trim();
    if let Some(rest) = strip_list_marker(s) {
        s = rest;
    }
    loop {
        let before = s;
        s = s.trim();
        for q in ['"', '\u{201c}', '\u{201d}', '\''] {
            s = s.strip_prefix(q).unwrap_or(s);
            s = s.strip_suffix(q).unwrap_or(s);
        }
        for e in ["...", "\u{2026}"] {
            s = s.strip_prefix(e).unwrap_or(s);
            s = s.strip_suffix(e).unwrap_or(s);
        }
        if s == before {
            break;
        }
    }
    s.trim().to_string()
}

/// Split a possibly numbered, possibly multi-line context field into passages.
pub fn split_contexts(value: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut numbered = false;
    for line in value.lines() {
        if let Some(rest) = strip_list_marker(line) {
            numbered = true;
            items.push(rest.to_string());
        } else if numbered {
            if let Some(last) = items.last_mut() {
                last.push('\n');
                last.push_str(line);
            }
        } else if items.is_empty() {
            items.push(line.to_string());
        } else {
            let last = items.last_mut().expect("non-empty");
            last.push('\n');
            last.push_str(line);
        }
    }
    items
        .iter()
        .map(|s| clean_passage(s))
        .filter(|s| !s.is_empty() && s.chars().any(char::is_alphanumeric))
        .collect()
}

/// Parse the event-extraction format. Unknown fields are ignored; a text
/// without any `[Event]:` label yields no events.
pub fn parse_event_block(raw: &str) -> Vec<DomainEvent> {
    labelled_records(raw)
        .into_iter()
        .filter_map(|fields| {
            let get = |name: &str| fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str());
            let event = get("event")?.trim();
            if event.is_empty() {
                return None;
            }
            Some(DomainEvent {
                event: event.to_string(),
                topic: get("topic").unwrap_or("").trim().to_string(),
                original_context: get("original context").map(split_contexts).unwrap_or_default(),
                event_type: EventType::parse(get("type").unwrap_or("")),
            })
        })
        .collect()
}

/// A `[Question]:` entry, optionally tagged with the event it answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQuestion {
    pub event: Option<String>,
    pub question: String,
}

pub fn parse_questions(raw: &str) -> Result<Vec<ParsedQuestion>> {
    let records = labelled_records(raw);
    let questions: Vec<ParsedQuestion> = records
        .into_iter()
        .filter_map(|fields| {
            let get = |name: &str| fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.clone());
            let question = get("question")?;
            let question = question.lines().next().unwrap_or("").trim().to_string();
            if question.is_empty() {
                return None;
            }
            Some(ParsedQuestion {
                event: get("event").filter(|e| !e.is_empty()),
                question,
            })
        })
        .collect();
    if questions.is_empty() {
        return Err(Error::LlmParse {
            message: "no [Question]: entries".into(),
            raw: raw.to_string(),
        });
    }
    Ok(questions)
}

/// Render events in the same bracketed layout the parser reads.
pub fn format_events(events: &[DomainEvent]) -> String {
    let mut out = String::new();
    for (i, e) in events.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("{}.\n[Event]: {}\n[Topic]: {}\n[Original context]: ", i + 1, e.event, e.topic));
        for (j, ctx) in e.original_context.iter().enumerate() {
            if j > 0 {
                out.push('\n');
            }
            out.push_str(&format!("{}. \"{}\"", j + 1, ctx));
        }
        out.push_str(&format!("\n[Type]: {}\n", e.event_type.label()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn missing_topic_is_empty() {
        let events = parse_event_block("[Event]: X happened.\n[Original context]: X happened here.\n[Type]: General");
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].topic, "");
        assert_eq!(events[0].event_type, EventType::General);
        assert_eq!(events[0].original_context, ["X happened here."]);
    }

    #[test]
    fn shuffled_field_order() {
        let a = "[Event]: A.\n[Topic]: t1\n[Original context]: ctx a\n[Type]: Fine-grained\n\n[Event]: B.\n[Topic]: t2\n[Original context]: ctx b\n[Type]: General";
        let b = "[Type]: Fine-grained\n[Original context]: ctx a\n[Event]: A.\n[Topic]: t1\n\n[Topic]: t2\n[Event]: B.\n[Type]: General\n[Original context]: ctx b";
        assert_eq!(parse_event_block(a), parse_event_block(b));
        assert_eq!(parse_event_block(a).len(), 2);
    }

    #[test]
    fn no_event_label_is_empty() {
        assert!(parse_event_block("nothing to see").is_empty());
        assert!(parse_event_block("").is_empty());
    }

    #[test]
    fn numbered_multi_line_contexts() {
        let raw = "[Event]: E\n[Original context]: 1. first passage\ncontinues here\n2. \"second passage\"\n[Type]: Fine-grained";
        let e = &parse_event_block(raw)[0];
        assert_eq!(e.original_context, ["first passage\ncontinues here", "second passage"]);
    }

    #[test]
    fn unknown_fields_ignored() {
        let raw = "[Event]: E\n[Organization]: Acme\n[Original context]: c";
        let e = &parse_event_block(raw)[0];
        assert_eq!(e.event, "E");
        assert_eq!(e.original_context, ["c"]);
    }

    #[test]
    fn question_parse() {
        let raw = "1. [Event]: A.\n[Question]: Why A?\n\n2. [Envent]: B.\n[Question]: Why B?";
        let qs = parse_questions(raw).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[1].event.as_deref(), Some("B."));
        assert_eq!(qs[1].question, "Why B?");
        assert!(matches!(parse_questions("no markers"), Err(Error::LlmParse { .. })));
    }

    #[test]
    fn format_then_parse_roundtrip() {
        let events = vec![
            DomainEvent {
                event: "A happened.".into(),
                topic: "A".into(),
                original_context: vec!["A happened in May.".into(), "Again.".into()],
                event_type: EventType::FineGrained,
            },
            DomainEvent {
                event: "B happened.".into(),
                topic: String::new(),
                original_context: vec!["B.".into()],
                event_type: EventType::General,
            },
        ];
        assert_eq!(parse_event_block(&format_events(&events)), events);
    }

    proptest! {
        #[test]
        fn parser_is_total(s in "\\PC{0,300}") {
            let _ = parse_event_block(&s);
            let _ = parse_questions(&s);
        }

        #[test]
        fn parser_is_total_on_labelled_noise(parts in proptest::collection::vec(
            prop_oneof![
                Just("[Event]:".to_string()), Just("[Topic]:".to_string()),
                Just("[Original context]:".to_string()), Just("[Type]:".to_string()),
                Just("[Question]:".to_string()), Just("\n1.".to_string()), Just("\"".to_string()),
                "[a-z …\\.\\n]{0,12}",
            ], 0..30)) {
            let s = parts.concat();
            let _ = parse_event_block(&s);
            let _ = parse_questions(&s);
        }
    }
}
