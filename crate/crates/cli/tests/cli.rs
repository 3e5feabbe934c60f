use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cmml_core::planner::{compile_plan, plan_from_json, PlanOptions};
use cmml_core::{parse_schema, SchemaSource};

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/examples")
}

fn cmml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmml"))
        .args(args)
        .env("CMML_TODAY", "2019-06-30")
        .output()
        .expect("runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn prepare(out: &Path, extra: &[&str]) -> Output {
    let schema = examples().join("customer_order.cmml");
    let data = examples().join("data");
    let mut args = vec!["prepare", "--schema", path(&schema), "--data-dir", path(&data), "--task", "PREDICT_LTV", "--out", path(out)];
    args.extend(extra);
    cmml(&args)
}

#[test]
fn prepare_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare(dir.path(), &["--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("PREDICT_LTV.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["datasets"][0]["rows"], 4);
    assert_eq!(manifest["provenance"]["today"], "2019-06-30");
    assert_eq!(manifest["provenance"]["schema_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn prepare_ignores_seed_and_splits_holdout() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(prepare(a.path(), &["--seed", "1"]).status.success());
    assert!(prepare(b.path(), &["--seed", "2"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("PREDICT_LTV.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));

    let h = tempfile::tempdir().unwrap();
    assert!(prepare(h.path(), &["--holdout", "0.5"]).status.success());
    let lines = |f: &str| std::fs::read_to_string(h.path().join(f)).unwrap().lines().count() - 1;
    assert_eq!(lines("PREDICT_LTV_train.csv") + lines("PREDICT_LTV_test.csv"), 4);
}

#[test]
fn dangling_foreign_key_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["CUSTOMER.csv", "ORDER_PRODUCT.csv", "PRODUCT.csv"] {
        std::fs::copy(examples().join("data").join(f), dir.path().join(f)).unwrap();
    }
    let orders = std::fs::read_to_string(examples().join("data/ORDER.csv")).unwrap();
    let mut lines: Vec<String> = orders.lines().map(String::from).collect();
    let last = lines.pop().unwrap();
    let (rest, _) = last.rsplit_once(',').unwrap();
    lines.push(format!("{rest},999"));
    std::fs::write(dir.path().join("ORDER.csv"), lines.join("\n") + "\n").unwrap();

    let schema = examples().join("customer_order.cmml");
    let out = cmml(&["validate", "--schema", path(&schema), "--data-dir", path(dir.path()), "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["valid"], false);
    assert!(!report["diagnostics"].as_array().unwrap().is_empty());

    let ok = cmml(&["validate", "--schema", path(&schema), "--data-dir", path(&examples().join("data"))]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn plan_json_round_trips() {
    let schema_path = examples().join("customer_order.cmml");
    let out = cmml(&["plan", "--schema", path(&schema_path), "--task", "PREDICT_LTV", "--json"]);
    assert!(out.status.success());
    let back = plan_from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let schema = parse_schema(&SchemaSource::from_file(&schema_path).unwrap()).unwrap();
    let direct = compile_plan(&schema, "PREDICT_LTV", &PlanOptions::from_task(&schema.tasks[0])).unwrap();
    assert_eq!(back, direct);

    let text = cmml(&["plan", "--schema", path(&schema_path), "--task", "PREDICT_LTV"]);
    assert!(String::from_utf8(text.stdout).unwrap().contains("Guideline 4 (entity summarization)"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cmml(&["prepare", "--schema", "x.cmml"]).status.code(), Some(2));
    assert_eq!(cmml(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cmml(&["plan", "--schema", "x", "--task", "T", "--impute", "median"]).status.code(), Some(2));
    assert_eq!(cmml(&["plan", "--schema", "x", "--task", "T", "--agg", "mean,median"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_1() {
    let schema = examples().join("customer_order.cmml");
    assert_eq!(cmml(&["plan", "--schema", path(&schema), "--task", "NOPE"]).status.code(), Some(1));
    assert_eq!(cmml(&["plan", "--schema", "/nonexistent.cmml", "--task", "T"]).status.code(), Some(1));
}

#[test]
fn flatten_writes_joined_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmml(&[
        "flatten",
        "--schema",
        path(&examples().join("customer_order.cmml")),
        "--data-dir",
        path(&examples().join("data")),
        "--task",
        "PREDICT_LTV",
        "--out",
        path(dir.path()),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("ds0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.lines().next().unwrap().ends_with("CUSTOMER_ltv"));
}

#[test]
fn generate_then_evaluate() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = a.path().join("spec.json");
    std::fs::write(&spec, r#"{"customers": 60}"#).unwrap();
    for d in [a.path(), b.path()] {
        let out = cmml(&["generate", "--out", path(d), "--seed", "4", "--spec", path(&spec)]);
        assert!(out.status.success());
    }
    for f in ["schema.cmml", "CUSTOMER.csv", "ORDER.csv", "truth.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }

    let report = a.path().join("report.json");
    let schema = a.path().join("schema.cmml");
    let out = cmml(&[
        "evaluate", "--schema", path(&schema), "--data-dir", path(a.path()), "--task", "PREDICT_LTV", "--folds", "3", "--out", path(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc, serde_json::from_slice::<serde_json::Value>(&std::fs::read(&report).unwrap()).unwrap());
    let cmp = &doc["results"][0]["comparison"];
    assert_eq!(cmp["keys"], 60);
    assert_eq!(cmp["folds"].as_array().unwrap().len(), 3);

    std::fs::write(&spec, r#"{"customer": 60}"#).unwrap();
    assert_eq!(cmml(&["generate", "--out", path(b.path()), "--spec", path(&spec)]).status.code(), Some(1));
}
