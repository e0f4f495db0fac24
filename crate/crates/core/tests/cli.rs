use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pct")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pct(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic task with weights and a trimmed config.
fn fixture(dir: &Path, with_weights: bool) -> std::path::PathBuf {
    ok(&["gen-synthetic", "--out", s(dir), "--train", "30", "--test", "8", "--seed", "2"]);
    if with_weights {
        ok(&["gen-weights", "--vocab", s(&dir.join("vocab.json")), "--out", s(&dir.join("model"))]);
    }
    let path = dir.join("config.json");
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    cfg["seeds"] = serde_json::json!([1, 2]);
    cfg["settings"] = serde_json::json!(["zero-shot", "zs+temp", "standard", "icl-temp"]);
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn missing_weights_exit_code_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), false);
    let out = pct(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error["), "{err}");
    assert!(err.contains(s(&dir.path().join("model"))), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn run_writes_artifacts_and_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), true);
    let out = dir.path().join("out");
    ok(&["run", "--config", s(&cfg), "--out", s(&out)]);
    for f in ["results.csv", "aggregates.json", "report.md", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(!manifest["inputs"].as_array().unwrap().is_empty());

    let md = ok(&["report", "--run", s(&out)]);
    assert_eq!(md, fs::read_to_string(out.join("report.md")).unwrap());
    assert!(md.contains("| Zero-shot |"), "{md}");
    let bars = ok(&["report", "--run", s(&out), "--format", "csv"]);
    assert!(bars.starts_with("setting,dataset,accuracy"), "{bars}");
}

#[test]
fn out_dir_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), true);
    let out = dir.path().join("env-out");
    let status = Command::new(env!("CARGO_BIN_EXE_pct"))
        .args(["run", "--config", s(&cfg)])
        .env("PCT_OUT_DIR", &out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(out.join("results.csv").is_file());
}

#[test]
fn inspect_rows_match_tokens() {
    let args = [
        "inspect",
        "--task",
        "agnews",
        "--demo",
        "Sports=The team won the cup.",
        "--demo",
        "Business=Shares of the bank fell.",
        "--test",
        "Rain delays the final.",
    ];
    let rows = ok(&args);
    let mut json_args = args.to_vec();
    json_args.push("--json");
    let dump: Value = serde_json::from_str(&ok(&json_args)).unwrap();
    let n = dump["tokens"].as_array().unwrap().len();
    assert_eq!(rows.lines().count(), n + 1);
    assert!(rows.lines().nth(1).unwrap().contains("BOS"));
    assert!(rows.contains("\tLABEL\t0"));
}

#[test]
fn inspect_without_demos_is_instruction_and_test() {
    let rows = ok(&["inspect", "--task", "sst2", "--test", "A fine film."]);
    for line in rows.lines().skip(1) {
        let class = line.split('\t').nth(2).unwrap();
        assert!(["BOS", "INSTR", "TEST_IN", "TEST_TEMP"].contains(&class), "{line}");
    }
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = pct(&["inspect", "--task", "nope", "--test", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let out = pct(&["inspect", "--task", "agnews", "--demo", "Weather=hi", "--test", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!pct(&["frobnicate"]).status.success());
}
