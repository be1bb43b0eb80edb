use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pragfeat::{Action, ExamplePrefLabel, PreferenceDataset, PreferenceRecord, RelevanceMask};
use serde_json::Value;

fn pragfeat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pragfeat")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

#[test]
fn parse_prints_mask_json() {
    let out = pragfeat(&["parse", "--domain", "flight", "--utterance", "i want the longest stop and the fewest number of stops"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mask"], serde_json::json!([0, 0, 0, 0, 0, 1, 1, 0]));
    assert_eq!(v["relevant"], serde_json::json!(["longest-stop", "number-of-stops"]));
    assert_eq!(v["source"], "keyword");
}

#[test]
fn augment_round_trips_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    let mut r = PreferenceRecord::new(
        Action(vec![1.0, -1.0, 0.0, 0.0, 1.0, 0.0]),
        Action(vec![-1.0, 1.0, 0.0, 0.0, 1.0, 1.0]),
        ExamplePrefLabel::PreferFirst,
    );
    r.mask = Some(RelevanceMask(vec![true, false, false, false, false, false]));
    let plain = PreferenceRecord::new(Action(vec![0.0; 6]), Action(vec![1.0; 6]), ExamplePrefLabel::Tie);
    std::fs::write(&input, PreferenceDataset::new(vec![r, plain]).to_jsonl()).unwrap();

    let out = pragfeat(&["augment", "--in", path_str(&input), "--out", path_str(&output), "--mode", "seen"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = PreferenceDataset::from_jsonl(&std::fs::read_to_string(&output).unwrap()).unwrap();
    // two differing irrelevant coordinates give three swaps
    assert_eq!(data.len(), 5);
    assert_eq!(data.synthesized_count(), 3);
    assert!(data.records[2..].iter().all(|s| s.a1.0[0] == 1.0 && s.a2.0[0] == -1.0));
}

#[test]
fn augment_rejects_bad_mode_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = pragfeat(&["augment", "--in", path_str(&missing), "--out", path_str(&dir.path().join("o.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    std::fs::write(&missing, "").unwrap();
    let out = pragfeat(&["augment", "--in", path_str(&missing), "--out", "o.jsonl", "--mode", "sometimes"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_flights_writes_pairs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let output = dir.path().join("pairs.jsonl");
    let out = pragfeat(&[
        "ingest-flights",
        "--in",
        path_str(&fixture("flights.jsonl")),
        "--out",
        path_str(&output),
        "--mask-source",
        "keyword",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["rows"], 12);
    let data = PreferenceDataset::from_jsonl(&std::fs::read_to_string(&output).unwrap()).unwrap();
    assert_eq!(data.len(), 24);
    assert!(data.records.iter().all(|r| r.mask.is_some()));

    let out = pragfeat(&["ingest-flights", "--in", path_str(&fixture("flights.jsonl")), "--out", path_str(&output), "--mask-source", "none"]);
    assert!(out.status.success());
    let data = PreferenceDataset::from_jsonl(&std::fs::read_to_string(&output).unwrap()).unwrap();
    assert!(data.records.iter().all(|r| r.mask.is_none()));

    let out = pragfeat(&["ingest-flights", "--in", path_str(&fixture("flights.jsonl")), "--out", path_str(&output), "--mask-source", "lm"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn experiment_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    std::fs::write(
        &config,
        r#"{"domain": "mushroom", "condition": "rlhf", "budgets": "1..3", "seeds": "2", "eval-pairs": 40, "epochs": 100}"#,
    )
    .unwrap();
    let out = pragfeat(&["experiment", "run", "--config", path_str(&config), "--condition", "prag-rlhf", "--budgets", "2,4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "condition,reward,seed,budget,gt_best_prob,stderr,n_train_records,n_synth_records"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 2 rewards x 2 seeds x 2 budgets + 2 aggregates
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r[0] == "prag-rlhf"));
    let budgets: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[3]).collect();
    assert_eq!(budgets.into_iter().collect::<Vec<_>>(), vec!["2", "4"]);
}

#[test]
fn experiment_rejects_unknown_keys_and_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, "condition = \"rlhf\"\nbogus = 3\n").unwrap();
    let out = pragfeat(&["experiment", "run", "--config", path_str(&config)]);
    assert_eq!(out.status.code(), Some(1));

    let out = pragfeat(&["experiment", "run", "--condition", "maybe"]);
    assert_eq!(out.status.code(), Some(1));

    let out = pragfeat(&["experiment", "run", "--domain", "mushroom", "--mask-source", "keyword", "--budgets", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}
