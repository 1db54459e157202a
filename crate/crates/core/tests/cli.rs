mod common;

use common::{axis_model, build_corpus, candidates, Case};
use std::path::Path;
use std::process::{Command, Output};
use styleguard::dgc::{write_checkpoint, TrainConfig};
use styleguard::embedding::write_dataset;

fn styleguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_styleguard"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Store, model checkpoint and candidate file for one fixture case.
fn judge_fixture(dir: &Path, case: Case) -> Output {
    let store = dir.join("store");
    build_corpus(&store);
    write_checkpoint(&dir.join("model.json"), &axis_model(), &TrainConfig::default()).unwrap();
    write_dataset(std::fs::File::create(dir.join("cands.jsonl")).unwrap(), &candidates(case)).unwrap();
    styleguard(&[
        "--store",
        path(&store),
        "judge",
        "--model",
        path(&dir.join("model.json")),
        "--candidates",
        path(&dir.join("cands.jsonl")),
    ])
}

#[test]
fn judge_prints_verdict_and_exits_zero_when_protected() {
    let dir = tempfile::tempdir().unwrap();
    let out = judge_fixture(dir.path(), Case::Protected);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], "styleguard-verdict");
    assert_eq!(v["results"].as_array().unwrap().len(), 3);
}

#[test]
fn failing_verdicts_map_to_distinct_exit_codes() {
    for (case, code) in [(Case::FailConsistency, 2), (Case::FailUniqueness, 3), (Case::FailAccuracy, 4)] {
        let dir = tempfile::tempdir().unwrap();
        let out = judge_fixture(dir.path(), case);
        assert_eq!(out.status.code(), Some(code), "{case:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = styleguard(&["judge", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_store_fails_without_panicking() {
    let dir = tempfile::tempdir().unwrap();
    let out = styleguard(&["--store", path(&dir.path().join("absent")), "corpus", "list"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn evaluate_prints_four_scored_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"train": {"epochs": 1}}"#).unwrap();
    let synth = styleguard(&["synth", "--output", path(&d.join("bench.jsonl")), "--per-style", "20", "--dim", "8"]);
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
    let cfg = path(&d.join("cfg.json")).to_string();
    let trained = styleguard(&[
        "--config",
        &cfg,
        "train",
        "--data",
        path(&d.join("bench.jsonl")),
        "--out",
        path(&d.join("model.json")),
    ]);
    assert!(trained.status.success(), "{}", String::from_utf8_lossy(&trained.stderr));
    let out = styleguard(&["evaluate", "--model", path(&d.join("model.json")), "--data", path(&d.join("bench.jsonl"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "dataset,method,ACC,NMI,ARI");
    let methods: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(methods, ["dgc-image", "dgc-text", "kmeans-image", "kmeans-text"]);
    for line in &lines[1..] {
        let acc: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=100.0).contains(&acc));
    }
}
