// SPDX-License-Identifier: Apache-2.0

use std::process::{Command, Output};

use serde_json::Value;

fn smoothlin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothlin"))
        .args(args)
        .env("NL_THREADS", "1")
        .output()
        .expect("spawn smoothlin")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn check_passes_on_ex1() {
    let out = smoothlin(&["check", "--system", "ex1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["verdict"]["pass"], true);
    assert!(v["hypothesis"]["ac2"].is_object());
}

#[test]
fn emo_fails_with_witness() {
    let out = smoothlin(&["check", "--system", "emo", "--c", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("J_n divergent"), "{err}");
    assert_eq!(json(&out)["verdict"]["pass"], false);
}

#[test]
fn config_errors_exit_2() {
    for args in [
        &["check", "--system", "nope"][..],
        &["check", "--series-tol", "-1"],
        &["check", "--lambda", "0"],
        &["check", "--n-min", "3", "--n-max", "-3"],
    ] {
        let out = smoothlin(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(smoothlin(&["check", "--bogus"]).status.code(), Some(2));
}

#[test]
fn zero_coupling_gives_zero_sums() {
    let out = smoothlin(&["conjugate", "--system", "ex1", "--gamma-scale", "0", "--grid-count", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["hypothesis"]["bc2"]["partial_sum"], 0.0);
    for table in ["inverse", "equivariance"] {
        let rows = v[table]["rows"].as_array().unwrap();
        assert!(!rows.is_empty());
        for r in rows {
            assert_eq!(r["residual"], 0.0);
            assert!(r["value"].as_array().unwrap().iter().all(|x| x == 0.0));
        }
    }
}

#[test]
fn tables_written_beside_out() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let out = smoothlin(&["report", "--system", "ex1", "--grid-count", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v["jacobians"]["max_rel_error"].is_object());
    for t in ["hypothesis", "equivariance", "inverse", "jacobians"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("run.{t}.csv"))).unwrap();
        assert!(csv.lines().count() > 1, "{t}");
    }

    let out = smoothlin(&["check", "--system", "ex1", "--format", "csv"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("# hypothesis\n"), "{text}");
}

#[test]
fn same_seed_same_report() {
    let args = ["report", "--system", "end_cfg", "--grid-count", "2", "--seed", "5"];
    let mut a = json(&smoothlin(&args));
    let mut b = json(&smoothlin(&args));
    a.as_object_mut().unwrap().remove("timing");
    b.as_object_mut().unwrap().remove("timing");
    assert_eq!(a, b);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"system": {"variant": "ex2"}, "n_range": [0, 2], "probe_grid": {"count": 1}}"#).unwrap();
    let out = smoothlin(&["conjugate", "--config", cfg.to_str().unwrap(), "--n-max", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["config"]["system"]["variant"], "ex2");
    assert_eq!(v["config"]["n_range"], serde_json::json!([0, 1]));
}
