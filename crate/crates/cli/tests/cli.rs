//! End-to-end checks on the `qvn` binary and its JSON contracts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qvn_cli::demos;
use qvn_cli::runner::{self, RunOptions};
use serde_json::Value;

fn qvn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvn")).args(args).output().expect("binary runs")
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn schema(name: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(manifest(&format!("schema/{name}.schema.json"))).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(v: &jsonschema::Validator, doc: &Value, what: &str) {
    let errs: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errs.is_empty(), "{what}: {errs:#?}");
}

fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn scenario_files_match_schema() {
    let v = schema("scenario");
    let mut n = 0;
    for entry in std::fs::read_dir(manifest("scenarios")).unwrap() {
        let path = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_valid(&v, &doc, &path.display().to_string());
        n += 1;
    }
    assert!(n >= 8);
}

#[test]
fn demo_reports_match_schema() {
    let v = schema("report");
    for name in demos::names() {
        let r = runner::run(&demos::load(name).unwrap(), RunOptions::default()).unwrap();
        let doc: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_valid(&v, &doc, name);
    }
}

#[test]
fn schema_rejects_unknown_step() {
    let v = schema("scenario");
    let doc = serde_json::json!({
        "schema_version": 1, "name": "x",
        "steps": [ { "op": "teleport", "label": "A" } ]
    });
    assert!(!v.is_valid(&doc));
}

#[test]
fn list_is_sorted_and_large_enough() {
    let out = qvn(&["list-scenarios"]);
    assert!(out.status.success());
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(str::to_owned).collect();
    assert!(names.len() >= 8, "{names:?}");
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

#[test]
fn run_writes_report_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("r.json");
    let file = manifest("scenarios/compose-HT.json");
    let out = qvn(&["run", file.to_str().unwrap(), "--out", out_path.to_str().unwrap(), "--trials", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(doc["trials"].as_array().unwrap().len(), 2);
    assert_eq!(doc["qubit_budget"]["peak"], 5);
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let out = qvn(&["demo", "compose-deterministic", "--seed", "42", "--trials", "6", "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
        let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        doc.as_object_mut().unwrap().remove("wall_time_ms");
        serde_json::to_string(&doc).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn seed_override_changes_outcomes() {
    let outcomes = |seed: &str| {
        let out = qvn(&["demo", "lcu-demo", "--seed", seed, "--trials", "16"]);
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        doc["trials"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t["steps"][2]["outcome"].as_str().unwrap().to_owned())
            .collect::<Vec<_>>()
    };
    assert_ne!(outcomes("1"), outcomes("2"));
}

#[test]
fn malformed_json_exits_two_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_tmp(&dir, "bad.json", "{\n  \"schema_version\": 1,\n  \"name\": \"x\"\n  \"steps\": []\n}\n");
    let out = qvn(&["run", &f]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn bad_reference_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_tmp(
        &dir,
        "ref.json",
        r#"{ "schema_version": 1, "name": "x", "steps": [ { "op": "write", "label": "nope", "input": "0" } ] }"#,
    );
    let out = qvn(&["run", &f]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("steps[0]"));
}

#[test]
fn unknown_demo_exits_two() {
    assert_eq!(qvn(&["demo", "no-such-demo"]).status.code(), Some(2));
}

#[test]
fn eavesdropping_aborts_with_exit_three() {
    let out = qvn(&["demo", "download-eavesdropper"]);
    assert_eq!(out.status.code(), Some(3));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["trials"][0]["aborted"], true);
}

#[test]
fn switch_mode_is_not_a_cli_mode() {
    let out = qvn(&["demo", "compose-HT", "--mode", "switch"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mode_flag_overrides_scenario_default() {
    let out = qvn(&["demo", "compose-HT", "--mode", "deterministic"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["qubit_budget"]["per_step"][2], 4);
}

#[test]
fn verify_reports_every_budget() {
    let out = qvn(&["verify"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains("ebit-download-two-qubit-program") && text.contains("expected 17 measured 17"));
}

#[test]
fn required_demos_are_listed() {
    let out = String::from_utf8(qvn(&["list-scenarios"]).stdout).unwrap();
    for name in [
        "compose-HT",
        "switch-demo",
        "control-unknown",
        "lcu-demo",
        "superchannel-demo",
        "download-ebit-qubit",
        "download-bb84",
        "verify-demo",
    ] {
        assert!(out.lines().any(|l| l == name), "missing {name}");
    }
}

#[test]
fn compose_ht_meets_its_targets() {
    let doc: Value = serde_json::from_slice(&qvn(&["demo", "compose-HT"]).stdout).unwrap();
    assert_eq!(doc["qubit_budget"]["peak"], 5);
    for t in doc["trials"].as_array().unwrap() {
        assert!(t["steps"][2]["fidelity"].as_f64().unwrap() >= 1.0 - 1e-9);
    }
}
