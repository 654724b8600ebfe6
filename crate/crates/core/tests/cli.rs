use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bmembed::fixture::fixture_dir;

fn bmembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmembed"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bmembed(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// The fixture config with absolute paths and a short training run.
fn write_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = std::fs::read_to_string(fixture_dir().join("pipeline.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["corpus"] {
        v[key] = fixture_dir().join(v[key].as_str().unwrap()).to_str().unwrap().into();
    }
    v["eval"]["gold"] = fixture_dir().join("gold.jsonl").to_str().unwrap().into();
    v["perturb"]["synonyms"] = fixture_dir().join("synonyms.json").to_str().unwrap().into();
    v["output_dir"] = dir.join("out").to_str().unwrap().into();
    v["train"]["steps"] = 40.into();
    edit(&mut v);
    let path = dir.join("config.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn run_and_report_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |_| {});
    let cfg = cfg.to_str().unwrap();
    let stdout = ok(&["run", "--config", cfg, "--seed", "5"]);
    assert!(stdout.contains("9 stages complete"), "{stdout}");
    assert!(stdout.contains("RRF+BMEmbed"));
    assert!(tmp.path().join("out/seed-5/report.json").is_file());
    let stdout = ok(&["report", "--config", cfg, "--seed", "5"]);
    assert!(stdout.contains("BMEmbed"));
}

#[test]
fn validation_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |v| {
        v["sampling"]["k"] = 4.into();
    });
    let out = bmembed(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());

    let cfg = write_config(tmp.path(), |v| {
        v["unexpected"] = true.into();
    });
    assert_eq!(bmembed(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(bmembed(&["run", "--bogus-flag"]).status.code(), Some(2));
}

#[test]
fn stage_failures_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |v| {
        v["corpus"] = "/nonexistent/corpus.jsonl".into();
    });
    let out = bmembed(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `ingest` failed"));
}

#[test]
fn single_stage_commands_follow_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |_| {});
    let cfg = cfg.to_str().unwrap();
    for stage in ["ingest", "index", "genqueries", "sample", "train", "eval", "fuse"] {
        ok(&[stage, "--config", cfg]);
    }
    let dir = tmp.path().join("out/seed-42");
    assert!(dir.join("eval_rrf_adapted.json").is_file());
    let stdout = ok(&["report", "--run-dir", dir.to_str().unwrap()]);
    assert!(stdout.contains("RRF"));
}

#[test]
fn standalone_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let fixture = tmp.path().join("fixture");
    ok(&["fixture", "--out", fixture.to_str().unwrap()]);
    assert_eq!(
        std::fs::read(fixture.join("corpus.jsonl")).unwrap(),
        std::fs::read(fixture_dir().join("corpus.jsonl")).unwrap()
    );
    let corpus = fixture.join("corpus.jsonl");
    let gold = fixture.join("gold.jsonl");
    let synonyms = fixture.join("synonyms.json");
    let (corpus, gold, synonyms) = (corpus.to_str().unwrap(), gold.to_str().unwrap(), synonyms.to_str().unwrap());

    ok(&["ingest", "--corpus", corpus, "--chunk-size", "64", "--out", &p("chunks.jsonl")]);
    ok(&["index", "--chunks", &p("chunks.jsonl"), "--out", &p("index.jsonl")]);
    let hits = ok(&["search", "--index", &p("index.jsonl"), "--query", "PHX-308 bushing tension", "--k", "3"]);
    assert_eq!(hits.lines().filter(|l| !l.starts_with('#')).count(), 3, "{hits}");
    assert!(hits.lines().nth(1).unwrap().starts_with("1\tdoc000"), "{hits}");

    ok(&["genqueries", "--corpus", corpus, "--index", &p("index.jsonl"), "--max-queries", "120", "--out", &p("queries.jsonl")]);
    ok(&[
        "sample", "--index", &p("index.jsonl"), "--queries", &p("queries.jsonl"), "--k", "200", "--m", "6",
        "--strategy", "explicit", "--boundaries", "0-2,2-6,6-12,12-30,30-80,80-200", "--out", &p("samples.jsonl"),
    ]);
    ok(&[
        "train", "--samples", &p("samples.jsonl"), "--chunks", &p("chunks.jsonl"), "--steps", "30", "--lr", "3e-6",
        "--out", &p("adapter.bin"), "--loss-curve", &p("loss.csv"),
    ]);
    assert_eq!(std::fs::metadata(p("adapter.bin")).unwrap().len(), 24 + 4 * 256 * 256);

    let line = ok(&[
        "eval", "--gold", gold, "--chunks", &p("chunks.jsonl"), "--adapter", &p("adapter.bin"), "--out",
        &p("adapted.json"), "--run-out", &p("adapted.tsv"), "--per-query", &p("adapted.csv"),
    ]);
    assert!(line.starts_with("adapted: hit@1"), "{line}");
    ok(&["eval", "--gold", gold, "--chunks", &p("chunks.jsonl"), "--out", &p("base.json"), "--run-out", &p("base.tsv")]);
    ok(&["fuse", "--runs", &format!("{},{}", p("base.tsv"), p("adapted.tsv")), "--out", &p("fused.tsv")]);
    let line = ok(&["eval", "--gold", gold, "--chunks", &p("chunks.jsonl"), "--run", &p("fused.tsv"), "--method", "rrf", "--out", &p("fused.json")]);
    assert!(line.starts_with("rrf:"));

    ok(&[
        "perturb", "--gold", gold, "--chunks", &p("chunks.jsonl"), "--index", &p("index.jsonl"), "--synonyms", synonyms,
        "--adapter", &p("adapter.bin"), "--out", &p("deltas.csv"), "--variants-out", &p("variants.jsonl"),
    ]);
    let deltas = std::fs::read_to_string(p("deltas.csv")).unwrap();
    assert_eq!(deltas.lines().count(), 1 + 3 * 3);
}

#[test]
fn explicit_strategy_requires_boundaries() {
    let out = bmembed(&["sample", "--index", "x", "--queries", "y", "--strategy", "explicit", "--out", "z"]);
    assert_eq!(out.status.code(), Some(2));
}
