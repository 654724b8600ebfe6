use super::*;
use crate::bm25::RankedEntry;
use crate::embedding::{AdapterParams, ToyEmbedder};
use proptest::prelude::*;

fn chunk(id: &str, text: &str) -> Chunk {
    Chunk {
        chunk_id: id.to_string(),
        doc_id: id.to_string(),
        text: text.to_string(),
        token_count: text.split_whitespace().count(),
        char_start: 0,
        char_end: text.chars().count(),
    }
}

fn list(qid: &str, ids: &[&str]) -> RankedList {
    RankedList {
        query_id: qid.to_string(),
        entries: ids
            .iter()
            .enumerate()
            .map(|(i, id)| RankedEntry {
                chunk_id: id.to_string(),
                score: 10.0 - i as f64,
            })
            .collect(),
    }
}

fn gold_query(qid: &str, rel: &[&str]) -> EvalQuery {
    EvalQuery {
        query_id: qid.to_string(),
        text: qid.to_string(),
        evidence: Vec::new(),
        chunk_ids: rel.iter().map(|s| s.to_string()).collect(),
    }
}

fn twelve_chunks() -> Vec<Chunk> {
    (1..=12).map(|i| chunk(&format!("c{i:02}"), &format!("text number {i}"))).collect()
}

#[test]
fn hand_computed_fixture() {
    let chunks = twelve_chunks();
    let queries = vec![
        gold_query("q1", &["c01"]),
        gold_query("q2", &["c02"]),
        gold_query("q3", &["c03", "c04"]),
        gold_query("q4", &["c06"]),
        gold_query("q5", &["c11"]),
    ];
    let gold = GoldSet::resolve(&queries, &chunks, &TokenizerConfig::default(), 0.6).unwrap();
    let run = vec![
        list("q1", &["c01", "c02"]),
        list("q2", &["c05", "c02"]),
        list("q3", &["c03", "c07", "c04"]),
        list("q4", &["c07", "c08", "c09", "c10", "c06"]),
        list("q5", &["c01", "c02", "c03", "c04", "c05", "c06", "c07", "c08", "c09", "c10", "c11"]),
    ];
    let r = evaluate_run("bm25", &run, &gold).unwrap();
    assert_eq!(r.hit_at_1, 0.4);
    assert_eq!(r.hit_at_4, 0.6);
    assert_eq!(r.hit_at_10, 0.8);
    assert!((r.map_at_10 - (1.0 + 0.5 + 5.0 / 6.0 + 0.2 + 0.0) / 5.0).abs() < 1e-12);
    assert_eq!(r.per_query[3].first_relevant_rank, Some(5));
    assert_eq!(r.per_query[4].first_relevant_rank, Some(11));
    let csv = per_query_csv(&r);
    assert!(csv.starts_with("query_id,hit@1,"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn perfect_run() {
    let chunks = twelve_chunks();
    let queries: Vec<EvalQuery> = (1..=5).map(|i| gold_query(&format!("q{i}"), &[&format!("c{i:02}")])).collect();
    let gold = GoldSet::resolve(&queries, &chunks, &TokenizerConfig::default(), 0.6).unwrap();
    let run: Vec<RankedList> = (1..=5).map(|i| list(&format!("q{i}"), &[&format!("c{i:02}"), "c12"])).collect();
    let r = evaluate_run("oracle", &run, &gold).unwrap();
    assert_eq!((r.hit_at_1, r.hit_at_4, r.hit_at_10, r.map_at_10), (1.0, 1.0, 1.0, 1.0));
}

#[test]
fn unmatchable_queries_are_excluded() {
    let chunks = twelve_chunks();
    let queries = vec![
        gold_query("q1", &["c01"]),
        EvalQuery {
            query_id: "q2".into(),
            text: "x".into(),
            evidence: vec!["nowhere in the corpus".into()],
            chunk_ids: Vec::new(),
        },
    ];
    let gold = GoldSet::resolve(&queries, &chunks, &TokenizerConfig::default(), 0.6).unwrap();
    assert_eq!(gold.len(), 1);
    assert_eq!(gold.unmatchable, vec!["q2"]);
    let empty = GoldSet::resolve(&queries[1..], &chunks, &TokenizerConfig::default(), 0.6).unwrap();
    assert!(evaluate_run("x", &[], &empty).is_err());
}

fn dense_setup() -> (Vec<Chunk>, GoldSet, EmbeddingTable, EmbeddingTable, ToyEmbedder) {
    let texts = [
        "pump housing torque",
        "valve seal replacement",
        "sensor calibration drift",
        "firmware update procedure",
        "bearing lubrication interval",
        "gasket material spec",
    ];
    let chunks: Vec<Chunk> = texts.iter().enumerate().map(|(i, t)| chunk(&format!("c{i}"), t)).collect();
    let queries = vec![
        EvalQuery {
            query_id: "a".into(),
            text: "how to replace the valve seal".into(),
            evidence: vec!["valve seal replacement".into()],
            chunk_ids: vec![],
        },
        EvalQuery {
            query_id: "b".into(),
            text: "sensor drift after calibration".into(),
            evidence: vec!["sensor calibration drift".into()],
            chunk_ids: vec![],
        },
    ];
    let gold = GoldSet::resolve(&queries, &chunks, &TokenizerConfig::default(), 0.6).unwrap();
    let toy = ToyEmbedder::new(64, 3).unwrap();
    let mut qt = EmbeddingTable::new(64);
    qt.embed_missing(&toy, queries.iter().map(|q| (q.query_id.as_str(), q.text.as_str())), 8).unwrap();
    let mut ct = EmbeddingTable::new(64);
    ct.embed_missing(&toy, chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())), 8).unwrap();
    (chunks, gold, qt, ct, toy)
}

#[test]
fn zero_adapter_reproduces_base_report() {
    let (chunks, gold, qt, ct, toy) = dense_setup();
    let cfg = EvalConfig::default();
    let zero = AdapterParams::zeros(64);
    let (a, run_a) = evaluate_dense("m", &Encoder::base(&toy), &qt, &ct, &chunks, &gold, &cfg).unwrap();
    let (b, run_b) = evaluate_dense("m", &Encoder::adapted(&toy, &zero), &qt, &ct, &chunks, &gold, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(run_a, run_b);
    assert_eq!(a.hit_at_1, 1.0);
    assert!(a.uniformity_abs.unwrap() > 0.0 && a.alignment_raw.unwrap() > 0.0);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn uniformity_sample_is_seeded() {
    assert_eq!(uniformity_sample(1000, 512, 7), uniformity_sample(1000, 512, 7));
    assert_ne!(uniformity_sample(1000, 512, 7), uniformity_sample(1000, 512, 8));
    assert_eq!(uniformity_sample(10, 512, 7), (0..10).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn hits_are_monotone(perm in Just((1..=12).collect::<Vec<u32>>()).prop_shuffle(), rel in prop::collection::btree_set(1u32..=12, 1..4)) {
        let ids: Vec<String> = perm.iter().map(|i| format!("c{i:02}")).collect();
        let rel: BTreeSet<String> = rel.iter().map(|i| format!("c{i:02}")).collect();
        let (h1, h4, h10) = (hit_at_k(&ids, &rel, 1), hit_at_k(&ids, &rel, 4), hit_at_k(&ids, &rel, 10));
        prop_assert!(h1 <= h4 && h4 <= h10);
        let ap = average_precision_at_10(&ids, &rel);
        prop_assert!((0.0..=1.0).contains(&ap));
        let top_filled = ids.iter().take(rel.len()).all(|id| rel.contains(id));
        prop_assert_eq!(ap == 1.0, top_filled);
    }
}
