//! End-to-end tests of the `counterfair` binary: every verb, flag/config
//! precedence, artifact layout, and the documented exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_counterfair"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> serde_json::Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn generate(dir: &Path, n: usize, seed: u64) -> String {
    let out = dir.join("gen");
    run_ok(&[
        "generate",
        "--out",
        out.to_str().unwrap(),
        "--setting",
        "u_de",
        "--phi",
        "2",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    out.join("data.csv").to_str().unwrap().to_string()
}

#[test]
fn generate_writes_seeded_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_ok(&[
        "generate",
        "--out",
        dir.path().join("a").to_str().unwrap(),
        "--setting",
        "u_de",
        "--phi",
        "2",
        "--n",
        "500",
        "--seed",
        "7",
    ]);
    assert_eq!(report["rows"], 500);

    let data = fs::read_to_string(dir.path().join("a/data.csv")).unwrap();
    assert_eq!(data.lines().count(), 501, "header plus one line per record");
    assert_eq!(data.lines().next().unwrap(), "a,z,m,y");

    let exo = fs::read_to_string(dir.path().join("a/exogenous.csv")).unwrap();
    assert_eq!(exo.lines().count(), 501);

    let splits: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/splits.json")).unwrap())
            .unwrap();
    let (tr, va, te) = (
        splits["train"].as_array().unwrap().len(),
        splits["val"].as_array().unwrap().len(),
        splits["test"].as_array().unwrap().len(),
    );
    assert_eq!((tr, va, te), (300, 100, 100));

    // Same flags, fresh directory: byte-identical data files.
    run_ok(&[
        "generate",
        "--out",
        dir.path().join("b").to_str().unwrap(),
        "--setting",
        "u_de",
        "--phi",
        "2",
        "--n",
        "500",
        "--seed",
        "7",
    ]);
    for file in ["data.csv", "exogenous.csv", "splits.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }

    // Φ = 0 is a valid parameter (confounding removed, generator still runs).
    run_ok(&[
        "generate",
        "--out",
        dir.path().join("c").to_str().unwrap(),
        "--phi",
        "0",
        "--n",
        "50",
        "--seed",
        "1",
    ]);
}

#[test]
fn config_file_is_loaded_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gen.json");
    fs::write(&config, r#"{ "phi": 3.0, "n": 120, "seed": 9 }"#).unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--phi",
        "2",
    ]);
    let snapshot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(snapshot["command"], "generate");
    assert_eq!(snapshot["config"]["phi"], 2.0, "explicit flag wins");
    assert_eq!(snapshot["config"]["n"], 120, "config value survives");
    assert_eq!(snapshot["config"]["seed"], 9);
}

#[test]
fn bounds_collapse_at_gamma_one_and_widen_with_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 800, 11);
    let out = dir.path().join("bounds");
    let report = run_ok(&[
        "bounds",
        "--out",
        out.to_str().unwrap(),
        "--data",
        &data,
        "--gamma-m",
        "1",
        "--gamma-y",
        "1",
    ]);
    for effect in ["de", "ie", "se"] {
        let iv = &report[effect];
        assert_eq!(iv["lo"], iv["hi"], "{effect} interval must be a point at gamma 1");
        assert_eq!(iv["lo"], iv["naive"], "{effect} point must equal the plug-in");
    }
    assert!(out.join("bounds.json").exists());
    assert!(out.join("resolved_config.json").exists());

    let wide = run_ok(&[
        "bounds",
        "--out",
        dir.path().join("b2").to_str().unwrap(),
        "--data",
        &data,
        "--gamma-m",
        "2",
        "--gamma-y",
        "2",
    ]);
    for effect in ["de", "ie", "se"] {
        assert!(
            wide[effect]["lo"].as_f64().unwrap() <= report[effect]["lo"].as_f64().unwrap()
                && wide[effect]["hi"].as_f64().unwrap() >= report[effect]["hi"].as_f64().unwrap(),
            "budget 2 interval must contain the gamma-1 point for {effect}"
        );
    }
}

#[test]
fn malformed_csv_is_a_validation_error_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,z,m,y\n0,0,1,1\n1,oops,0,1\n").unwrap();
    let out = run(&[
        "bounds",
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--data",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 2"), "error should name the offending row: {stderr}");
}

#[test]
fn overlap_violation_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let degenerate = dir.path().join("deg.csv");
    // No a=0 record in the z=1 cell: P(a=0|z=1) = 0 at zero smoothing.
    fs::write(&degenerate, "a,z,m,y\n0,0,0,0\n0,0,1,1\n1,0,0,1\n1,1,0,1\n1,1,1,0\n").unwrap();
    let out = run(&[
        "bounds",
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--data",
        degenerate.to_str().unwrap(),
        "--smoothing",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlap violation"));
}

#[test]
fn sweep_emits_one_nested_row_per_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 800, 13);
    let out = dir.path().join("sweep");
    let report = run_ok(&[
        "sweep",
        "--out",
        out.to_str().unwrap(),
        "--data",
        &data,
        "--grid",
        "1.2,2.0,5.0",
    ]);
    assert_eq!(report["rows"], 3);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "gamma,de_lo,de_hi,ie_lo,ie_hi,se_lo,se_hi");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for pair in rows.windows(2) {
        for k in (1..7).step_by(2) {
            assert!(pair[1][k] <= pair[0][k], "lower endpoints must descend with gamma");
            assert!(pair[1][k + 1] >= pair[0][k + 1], "upper endpoints must ascend with gamma");
        }
    }

    // A single gamma-1 row is legal and zero-width.
    let single = dir.path().join("single");
    run_ok(&["sweep", "--out", single.to_str().unwrap(), "--data", &data, "--grid", "1"]);
    let csv = fs::read_to_string(single.join("sweep.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    for k in (1..7).step_by(2) {
        assert_eq!(row[k], row[k + 1], "gamma 1 row must have zero width");
    }

    // Descending grids are rejected up front.
    let out = run(&[
        "sweep",
        "--out",
        dir.path().join("desc").to_str().unwrap(),
        "--data",
        &data,
        "--grid",
        "5,2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_fair_writes_model_reports_and_evaluate_reproduces_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 600, 17);
    let out = dir.path().join("train");
    let report = run_ok(&[
        "train",
        "--out",
        out.to_str().unwrap(),
        "--data",
        &data,
        "--mode",
        "fair",
        "--gamma-m",
        "1",
        "--iterations",
        "2",
        "--nested-epochs",
        "1",
        "--hidden",
        "4",
        "--seed",
        "3",
    ]);
    for file in ["model.json", "train_report.json", "eval_report.json", "resolved_config.json"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    assert_eq!(report["final_constraints"].as_array().unwrap().len(), 3);
    assert!(report["scorecard"]["roc_auc"].is_f64());

    // evaluate on the stored model with the same estimator settings
    // reproduces the post-training audit bit for bit.
    let eval = run_ok(&[
        "evaluate",
        "--out",
        dir.path().join("eval").to_str().unwrap(),
        "--data",
        &data,
        "--model",
        out.join("model.json").to_str().unwrap(),
        "--gamma-m",
        "1",
    ]);
    assert_eq!(eval["scorecard"], report["scorecard"]);
    assert_eq!(eval["bounds"], report["bounds"]);
}

#[test]
fn standard_mode_warns_when_constraint_flags_are_passed() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 400, 19);
    let out = bin()
        .args([
            "train",
            "--out",
            dir.path().join("std").to_str().unwrap(),
            "--data",
            &data,
            "--mode",
            "standard",
            "--epochs",
            "2",
            "--hidden",
            "4",
            "--iterations",
            "9",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("standard mode ignores constraint flags"),
        "expected a warning on stderr"
    );
}

#[test]
fn oracle_check_reports_tiny_gaps_at_gamma_one_and_rejects_zero_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle");
    let report = run_ok(&[
        "oracle-check",
        "--out",
        out.to_str().unwrap(),
        "--gamma-m",
        "1",
        "--gamma-y",
        "1",
        "--budget",
        "3000",
        "--seed",
        "3",
    ]);
    assert!(report["gaps"]["mean"].as_f64().unwrap().abs() < 1e-9);
    for effect in ["de", "ie", "se"] {
        let theorem = &report["theorem"][effect];
        assert_eq!(theorem["lo"], theorem["hi"], "gamma 1 theorem interval is a point");
    }
    assert!(out.join("oracle_report.json").exists());

    let bad = run(&[
        "oracle-check",
        "--out",
        dir.path().join("z").to_str().unwrap(),
        "--budget",
        "0",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}
