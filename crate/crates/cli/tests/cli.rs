use std::path::Path;
use std::process::{Command, Output};

fn sqk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqk")).current_dir(dir).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn generate_train_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let v = json(&sqk(d, &["gen-data", "--task", "ring", "--seed", "4", "--train-out", "tr.csv", "--test-out", "te.csv"]));
    assert_eq!(v["n_train"], 40);
    assert_eq!(v["n_test"], 8);

    let v = json(&sqk(d, &["train", "--train", "tr.csv", "--test", "te.csv", "--gamma", "40", "--model-out", "m.json"]));
    assert_eq!(v["train_accuracy"], 1.0);
    assert!(v["kkt_residual"].as_f64().unwrap() <= 1e-5);

    json(&sqk(d, &["boundary", "--model", "m.json", "--steps", "2", "--out", "b.csv"]));
    let grid = std::fs::read_to_string(d.join("b.csv")).unwrap();
    assert_eq!(grid.lines().count(), 5);
    assert_eq!(grid.lines().next(), Some("x1,x2,f"));
}

#[test]
fn learn_then_fidelity_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    json(&sqk(d, &["gen-data", "--task", "ring", "--seed", "2", "--train-out", "tr.csv"]));
    let v = json(&sqk(d, &["learn", "--train", "tr.csv", "--gamma", "40", "--out", "l.json"]));
    let r = v["r"].as_f64().unwrap();
    assert!((0.0..=2.0).contains(&r));
    json(&sqk(d, &["boundary", "--learned", "l.json", "--train", "tr.csv", "--steps", "3", "--out", "f.csv"]));
    assert_eq!(std::fs::read_to_string(d.join("f.csv")).unwrap().lines().count(), 10);
}

#[test]
fn qct_reports_both_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    json(&sqk(d, &["gen-data", "--task", "hypotrochoid", "--n-test", "80", "--train-out", "h.csv", "--test-out", "ht.csv"]));
    let v = json(&sqk(d, &["qct", "--train", "h.csv", "--test", "ht.csv", "--gamma", "200", "--angle-rule", "aligned"]));
    assert_eq!(v["config"]["angle_rule"]["kind"], "boundary_aligned");
    assert!(v["stage2"]["test_accuracy"].as_f64().is_some());
}

#[test]
fn experiment_from_config_document() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = serde_json::json!({
        "task": "ring", "n_train_per_class": 20, "n_test_total": 8, "method": "rbf_svm",
        "gamma": 40.0, "n_seeds": 3, "master_seed": 9, "output_path": "res.json"
    });
    std::fs::write(d.join("cfg.json"), cfg.to_string()).unwrap();
    let v = json(&sqk(d, &["experiment", "--config", "cfg.json"]));
    assert_eq!(v["n_seeds"], 3);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("res.json")).unwrap()).unwrap();
    assert_eq!(doc["per_seed"].as_array().unwrap().len(), 3);
    assert!(d.join("res.csv").exists());

    // Same config, sequential: identical per-seed records.
    let again = json(&sqk(d, &["--sequential", "experiment", "--config", "cfg.json", "--out", "seq.json"]));
    assert_eq!(again["results"][0]["mean"], v["results"][0]["mean"]);
    let seq: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("seq.json")).unwrap()).unwrap();
    assert_eq!(seq["per_seed"], doc["per_seed"]);
}

#[test]
fn estimate_writes_one_row_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("pts.csv"), "x1,x2\n0.0,0.0\n0.1,0.0\n").unwrap();
    std::fs::write(d.join("pairs.csv"), "i,j\n0,1\n1,1\n").unwrap();
    json(&sqk(d, &["estimate", "--points", "pts.csv", "--pairs", "pairs.csv", "--gamma", "2", "--shots", "500", "--out", "e.csv"]));
    let text = std::fs::read_to_string(d.join("e.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "i,j,estimate,shots");
    assert!(rows[2].starts_with("1,1,1.0"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| sqk(d, args).status.code();
    assert_eq!(code(&["experiment", "--task", "ring", "--method", "qct_squeezed", "--n-seeds", "1"]), Some(2));
    assert_eq!(code(&["experiment", "--task", "ring", "--method", "rbf_svm", "--n-seeds", "0"]), Some(2));
    assert_eq!(code(&["experiment", "--task", "ring"]), Some(2));
    std::fs::write(d.join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&["experiment", "--config", "bad.json"]), Some(2));
    assert_eq!(code(&["train", "--train", "tr.csv", "--gamma", "-1"]), Some(2));
    assert_eq!(code(&["no-such-command"]), Some(2));
    // Missing input data is a runtime failure.
    assert_eq!(code(&["train", "--train", "missing.csv"]), Some(1));
}
