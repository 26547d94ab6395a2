use std::process::{Command, Output};

use dor_cli::run_with;

fn dor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dor"))
        .args(args)
        .env_remove("DOR_CELL_BUDGET")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn in_process(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("dor").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn table_for_first_scenario() {
    let o = dor(&["dor", "builtin:nhtsa1", "--format", "table"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows[0], ["nhtsa1", "1", "1"]);
    assert_eq!(rows[1], ["2", "0"]);
    assert_eq!(rows[2], ["P1", "0"]);
}

#[test]
fn identify_second_scenario() {
    let (code, out, _) = in_process(&["identify", "builtin:nhtsa2", "--epsilon", "1e-6"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["responsible_set"], serde_json::json!(["1", "3"]));
}

#[test]
fn missing_file_is_usage_error() {
    let o = dor(&["dor", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(in_process(&["dor"]).0, 2);
    assert_eq!(in_process(&["frobnicate"]).0, 2);
    assert_eq!(in_process(&["identify", "builtin:nhtsa1", "--restrict"]).0, 2);
    assert_eq!(in_process(&["dor", "builtin:nhtsa1", "--epsilon", "0"]).0, 2);
    assert_eq!(in_process(&["dor", "builtin:nowhere"]).0, 2);
    assert_eq!(in_process(&["--help"]).0, 0);
}

#[test]
fn restrict_keeps_psi_on_builtins() {
    for id in ["nhtsa1", "nhtsa2", "nhtsa3", "example1"] {
        let spec = format!("builtin:{id}");
        let full: serde_json::Value = serde_json::from_str(&in_process(&["dor", &spec]).1).unwrap();
        let restricted: serde_json::Value =
            serde_json::from_str(&in_process(&["dor", &spec, "--restrict"]).1).unwrap();
        let psi = |v: &serde_json::Value| -> Vec<f64> {
            v["agents"].as_array().unwrap().iter().map(|a| a["psi"].as_f64().unwrap()).collect()
        };
        for (a, b) in psi(&full).iter().zip(psi(&restricted)) {
            assert!((a - b).abs() <= 1e-9, "{id}");
        }
    }
}

#[test]
fn json_output_is_byte_identical_across_runs() {
    let a = dor(&["dor", "builtin:example1"]);
    let b = dor(&["dor", "builtin:example1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let (code, out, _) = in_process(&["dor", "builtin:nhtsa3", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["scenario"], "nhtsa3");
}

#[test]
fn invalid_rows_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    let doc = serde_json::json!({
        "schema_version": "1",
        "agents": [{"id": "a", "kind": "vehicle"}],
        "locations": ["x", "y"],
        "actions": {"a": {"labels": ["go"]}},
        "transitions": {
            "mode": "joint",
            "entries": [
                {"from": ["x"], "action": ["go"], "to": ["y"], "p": 0.7},
                {"from": ["y"], "action": ["go"], "to": ["y"], "p": 1.0}
            ]
        },
        "unsafe": {"kind": "explicit", "params": {"states": [{"a": "y"}]}},
        "trajectory": {"states": [["x"], ["y"]], "actions": [["go"]]}
    });
    std::fs::write(&path, doc.to_string()).unwrap();
    let p = path.to_str().unwrap();
    let (code, out, _) = in_process(&["validate", p]);
    assert_eq!(code, 1);
    assert!(out.contains("ROW_SUM"), "{out}");
    assert_eq!(in_process(&["dor", p]).0, 1);
}

#[test]
fn syntax_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let (code, _, err) = in_process(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("SCHEMA_SYNTAX"), "{err}");
}

#[test]
fn cell_budget_guard() {
    let (code, out, err) = in_process(&["--cell-budget", "10", "dor", "builtin:nhtsa2"]);
    assert_eq!(code, 3);
    assert!(out.is_empty());
    assert!(err.contains("budget"));
    let o = Command::new(env!("CARGO_BIN_EXE_dor"))
        .args(["dor", "builtin:nhtsa2"])
        .env("DOR_CELL_BUDGET", "10")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn local_dor_needs_graph() {
    assert_eq!(in_process(&["local-dor", "builtin:nhtsa1", "--k", "1"]).0, 2);
    let (code, out, _) = in_process(&["local-dor", "builtin:example1", "--k", "3"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["scenario"], "example1");
    let psi: Vec<f64> = v["agents"].as_array().unwrap().iter().map(|a| a["psi"].as_f64().unwrap()).collect();
    assert_eq!(psi, [0.0, 0.5, 0.5, 0.0]);
    assert!(v["bound"]["value"].is_number());
}

#[test]
fn decay_check_and_listing() {
    let (code, out, _) = in_process(&["decay-check", "builtin:example1", "--k-max", "3"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["deviations"].as_array().unwrap().len(), 4);
    let (code, out, _) = in_process(&["scenarios"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 4);
}
