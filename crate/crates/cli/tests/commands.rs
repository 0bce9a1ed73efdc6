mod common;

use std::fs;
use std::path::Path;

use common::{fixture, rgf, run, stderr, MockServer};
use serde_json::{json, Value};

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn run_toy(out: &Path) {
    let status = run(&[
        "run",
        "--examples",
        p(&fixture("toy_examples.jsonl")),
        "--corpus",
        p(&fixture("toy_corpus.jsonl")),
        "--out",
        p(out),
        "--retrieval-k",
        "10",
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", stderr(&status));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.jsonl");
    let examples = fixture("toy_examples.jsonl");
    let corpus = fixture("toy_corpus.jsonl");

    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));

    let missing = run(&["run", "--examples", "/nonexistent.jsonl", "--corpus", p(&corpus), "--out", p(&out)]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).starts_with("error: "));

    let config = dir.path().join("bad.toml");
    fs::write(&config, "beams = 0\n").unwrap();
    let bad = run(&["run", "--examples", p(&examples), "--corpus", p(&corpus), "--out", p(&out), "--config", p(&config)]);
    assert_eq!(bad.status.code(), Some(1), "{}", stderr(&bad));

    fs::write(&config, "no_such_key = 3\n").unwrap();
    let unknown = run(&["run", "--examples", p(&examples), "--corpus", p(&corpus), "--out", p(&out), "--config", p(&config)]);
    assert_eq!(unknown.status.code(), Some(1));

    let stage = run(&["stage", "bogus", "--in", p(&examples), "--out", p(&out)]);
    assert_eq!(stage.status.code(), Some(1));

    let needs = run(&["stage", "retrieve", "--in", p(&examples), "--out", p(&out)]);
    assert_eq!(needs.status.code(), Some(1));
    assert!(stderr(&needs).contains("--corpus"), "{}", stderr(&needs));

    let garbage = dir.path().join("garbage.jsonl");
    fs::write(&garbage, "{\"example_id\": 1}\n").unwrap();
    let malformed = run(&["stats", "--in", p(&garbage), "--report", "ed-hist"]);
    assert_eq!(malformed.status.code(), Some(2));
    assert!(stderr(&malformed).contains("garbage.jsonl:1:"), "{}", stderr(&malformed));
}

#[test]
fn run_writes_manifest_and_timing_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cf.jsonl");
    run_toy(&out);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cf.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stage"], "run");
    assert_eq!(manifest["counts"]["selected"].as_u64().unwrap() as usize, lines(&out).len());
    assert!(manifest["inputs"]["examples"].as_str().unwrap().len() == 64);
    assert!(!manifest.to_string().contains("wall_time"));
    let timing: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cf.jsonl.timing.json")).unwrap()).unwrap();
    assert!(timing["wall_time_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn gateway_env_var_switches_to_remote_mode() {
    let dir = tempfile::tempdir().unwrap();
    let local = dir.path().join("local.jsonl");
    let remote = dir.path().join("remote.jsonl");
    run_toy(&local);

    let server = MockServer::start();
    let out = rgf()
        .env("RGF_GATEWAY_URL", &server.url)
        .args([
            "run",
            "--examples",
            p(&fixture("toy_examples.jsonl")),
            "--corpus",
            p(&fixture("toy_corpus.jsonl")),
            "--out",
            p(&remote),
            "--retrieval-k",
            "10",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("remote.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["gateway"]["mode"], "remote");
    assert_eq!(manifest["config"]["gateway"]["generator_url"], server.url.as_str());

    // The server wraps the same mocks, so the selections agree.
    let key = |v: &Value| (v["triple_id"].clone(), v["question"].clone(), v["answer"].clone());
    let a: Vec<_> = lines(&local).iter().map(key).collect();
    let b: Vec<_> = lines(&remote).iter().map(key).collect();
    assert!(!a.is_empty());
    assert_eq!(a, b);

    drop(server);
}

#[test]
fn pair_consistency_stats_and_export_chain() {
    let dir = tempfile::tempdir().unwrap();
    let selected = dir.path().join("cf.jsonl");
    run_toy(&selected);
    let examples = fixture("toy_examples.jsonl");

    let pairs = dir.path().join("pairs.jsonl");
    let out = run(&[
        "pair",
        "--examples",
        p(&examples),
        "--triples",
        p(&selected),
        "--out",
        p(&pairs),
        "--gazetteer",
        p(&fixture("toy_gazetteer.jsonl")),
        "--category",
        "reference_change",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let pair_records = lines(&pairs);
    assert!(!pair_records.is_empty());
    for r in &pair_records {
        assert_eq!(r["category"], "reference_change");
        assert!(r["pair_id"].is_string());
    }

    // Originals right, every counterfactual right except the first.
    let preds = dir.path().join("preds.jsonl");
    let mut body = String::new();
    for (i, r) in pair_records.iter().enumerate() {
        let gold = r["original"]["gold_answers"][0].clone();
        body.push_str(&format!("{}\n", json!({"example_id": r["original"]["example_id"], "predicted": gold})));
        let cf = if i == 0 { json!("nobody") } else { r["counterfactual"]["answer"]["surface"].clone() };
        body.push_str(&format!("{}\n", json!({"example_id": r["counterfactual"]["triple_id"], "predicted": cf})));
    }
    fs::write(&preds, body).unwrap();
    let report = dir.path().join("report.json");
    let out = run(&["consistency", "--pairs", p(&pairs), "--preds", p(&preds), "--breakdown", "--json", p(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let value: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let n = pair_records.len() as f64;
    assert_eq!(value["total_pairs"].as_u64().unwrap() as usize, pair_records.len());
    assert!((value["consistency"].as_f64().unwrap() - (n - 1.0) / n).abs() < 1e-12);
    assert!(String::from_utf8(out.stdout).unwrap().contains("reference_change"));

    let f1 = run(&["consistency", "--pairs", p(&pairs), "--preds", p(&preds), "--metric", "f1", "--f1-threshold", "0.5"]);
    assert_eq!(f1.status.code(), Some(0), "{}", stderr(&f1));

    for report in ["ed-hist", "rank-curve", "qtype", "shards"] {
        let out = run(&["stats", "--in", p(&selected), "--report", report, "--examples", p(&examples)]);
        assert_eq!(out.status.code(), Some(0), "{report}: {}", stderr(&out));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v.is_object() || v.is_array(), "{report}");
    }

    let augmented = dir.path().join("train.jsonl");
    let out = run(&["export", "--examples", p(&examples), "--selected", p(&selected), "--out", p(&augmented)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let records = lines(&augmented);
    assert_eq!(records.len(), lines(&examples).len() + lines(&selected).len());
    let with_provenance = records.iter().filter(|r| r["provenance"].is_object()).count();
    assert_eq!(with_provenance, lines(&selected).len());
}
