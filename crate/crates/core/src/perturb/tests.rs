use super::*;
use crate::bm25::{Bm25Params, InvertedIndex};
use crate::corpus::{chunk_corpus, Document};
use crate::eval::EvalQuery;
use crate::retrieval::Bm25Retriever;
use crate::text::{tokenize, TokenizerConfig};
use proptest::prelude::*;

const TABLE_QUERY: &str = "What variables are considered on top of the value at 1 January when calculating the value at 31 December for government grants that are included within trade and other payables?";

fn table_keywords() -> Vec<String> {
    ["1 January", "government", "grants", "trade", "payables"].iter().map(|s| s.to_string()).collect()
}

struct Fixed(String);

impl LlmClient for Fixed {
    fn complete(&self, _prompt: &str) -> Result<String> {
        Ok(self.0.clone())
    }
}

#[test]
fn table_masking() {
    assert_eq!(
        mask_keywords(TABLE_QUERY, &table_keywords()),
        "What variables are considered on top of the value at [MASK] when calculating the value at 31 December for [MASK] [MASK] that are included within [MASK] and other [MASK]?"
    );
}

#[test]
fn table_substitution() {
    let synonyms: BTreeMap<String, String> = table_keywords()
        .into_iter()
        .zip(["New Year's Day", "public", "subsidies", "commerce", "liabilities"].map(String::from))
        .collect();
    assert_eq!(
        substitute_keywords(TABLE_QUERY, &table_keywords(), &synonyms).unwrap(),
        "What variables are considered on top of the value at New Year's Day when calculating the value at 31 December for public subsidies that are included within commerce and other liabilities?"
    );
}

#[test]
fn masking_edge_cases() {
    assert_eq!(mask_keywords("keep me", &[]), "keep me");
    assert_eq!(mask_keywords("grants, more grants", &["grants".into()]), "[MASK], more [MASK]");
}

#[test]
fn substitution_edge_cases() {
    let kws = vec!["valve".to_string()];
    let identity: BTreeMap<String, String> = [("valve".to_string(), "valve".to_string())].into();
    assert_eq!(substitute_keywords("the valve", &kws, &identity).unwrap(), "the valve");
    let one: BTreeMap<String, String> = [("valve".to_string(), "tap".to_string())].into();
    assert_eq!(substitute_keywords("the valve leaks", &kws, &one).unwrap(), "the tap leaks");
    let err = substitute_keywords("a b", &["a".into(), "b".into()], &BTreeMap::new()).unwrap_err();
    assert!(matches!(err, Error::MissingSynonyms(ref m) if m == &vec!["a".to_string(), "b".to_string()]));
    assert!(err.to_string().contains('a'));
}

#[test]
fn llm_keywords_are_validated() {
    let llm = Fixed("1 January, government, grants, trade, payables, Eastwood".into());
    let evidence = vec!["At 1 January the government grants within trade and other payables were restated.".to_string()];
    let got = extract_keywords(TABLE_QUERY, &evidence, &llm, &PromptSet::default()).unwrap();
    assert_eq!(got, table_keywords());
    let none = extract_keywords("unrelated words", &evidence, &Fixed(String::new()), &PromptSet::default()).unwrap();
    assert!(none.is_empty());
}

#[test]
fn llm_synonyms_must_match_count() {
    let kws = vec!["grants".to_string(), "trade".to_string()];
    let ok = generate_synonyms("q", &kws, &Fixed("subsidies, commerce".into()), &PromptSet::default()).unwrap();
    assert_eq!(ok["trade"], "commerce");
    let bad = generate_synonyms("q", &kws, &Fixed("subsidies".into()), &PromptSet::default());
    assert!(matches!(bad, Err(Error::LlmParse { .. })));
}

fn small_index() -> (Vec<crate::corpus::Chunk>, InvertedIndex) {
    let docs = vec![
        Document::new("a", "The zorbex pump uses a ceramic impeller rated for brine."),
        Document::new("b", "Quarterly report on the pump supply chain and shipping."),
        Document::new("c", "Ceramic coatings resist brine corrosion in marine service."),
    ];
    let chunks = chunk_corpus(&docs, 64, &TokenizerConfig::default()).unwrap();
    let index = InvertedIndex::build(&chunks, Bm25Params::default(), TokenizerConfig::default()).unwrap();
    (chunks, index)
}

#[test]
fn stub_keywords_rank_shared_terms_by_idf() {
    let (_, index) = small_index();
    let idf = IdfTable::from_index(&index);
    let evidence = vec!["The zorbex pump uses a ceramic impeller rated for brine.".to_string()];
    let kws = stub_keywords("which pump has a zorbex impeller", &evidence, &idf, 5, 0.0);
    // Shared: a, zorbex, impeller (df 1, query order) then pump (df 2).
    assert_eq!(kws, vec!["a", "zorbex", "impeller", "pump"]);
    assert!(stub_keywords("nothing shared", &evidence, &idf, 5, 0.0).is_empty());
    let cutoff = idf.idf("zorbex");
    assert_eq!(stub_keywords("which pump has a zorbex impeller", &evidence, &idf, 5, cutoff), vec!["a", "zorbex", "impeller"]);
}

#[test]
fn original_variant_has_zero_drop() {
    let (chunks, index) = small_index();
    let gold_q = vec![EvalQuery {
        query_id: "q".into(),
        text: "zorbex impeller".into(),
        evidence: vec!["ceramic impeller rated for brine".into()],
        chunk_ids: vec![],
    }];
    let gold = GoldSet::resolve(&gold_q, &chunks, &TokenizerConfig::default(), 0.6).unwrap();
    let variants = vec![PerturbedQuery {
        query_id: "q".into(),
        original: "zorbex impeller".into(),
        masked: mask_keywords("zorbex impeller", &["zorbex".into(), "impeller".into()]),
        substituted: "rotor".into(),
        keywords: vec!["zorbex".into(), "impeller".into()],
        synonyms: BTreeMap::new(),
    }];
    let bm25 = Bm25Retriever { index: &index };
    let rows = run_perturbation_eval(&[&bm25], &variants, &gold, 10).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].variant, Variant::Original);
    assert_eq!((rows[0].drop_hit_at_1, rows[0].drop_map_at_10), (0.0, 0.0));
    assert_eq!(rows[0].hit_at_1, 1.0);
    assert_eq!(rows[1].hit_at_10, 0.0);
    for r in &rows {
        assert_eq!(r.drop_map_at_10, rows[0].map_at_10 - r.map_at_10);
    }
    assert!(delta_csv(&rows).lines().nth(2).unwrap().starts_with("bm25,masked,0,"));
}

proptest! {
    #[test]
    fn masked_text_keeps_no_keyword_tokens(
        words in prop::collection::vec("[a-z]{2,6}", 1..12),
        pick in prop::collection::vec(any::<prop::sample::Index>(), 1..4),
    ) {
        let query = words.join(" ");
        let keywords: Vec<String> = pick.iter().map(|i| words[i.index(words.len())].clone()).collect();
        let masked = mask_keywords(&query, &keywords);
        let toks = tokenize(&masked, &TokenizerConfig::default());
        for k in &keywords {
            prop_assert!(!toks.contains(k));
        }
        let synonyms: BTreeMap<String, String> = keywords.iter().map(|k| (k.clone(), format!("{k}syn"))).collect();
        let sub = substitute_keywords(&query, &keywords, &synonyms).unwrap();
        let sub_toks = tokenize(&sub, &TokenizerConfig::default());
        for k in &keywords {
            prop_assert!(!sub_toks.contains(k));
            let expected = format!("{k}syn");
            prop_assert!(sub_toks.contains(&expected));
        }
    }
}
