use std::path::Path;
use std::process::{Command, Output};

use shiftscope::io::{read_json, read_reports, TruthFile};
use shiftscope::synth::{one_sjs_scenario, Shift};
use shiftscope::Method;

fn shiftscope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shiftscope"))
        .args(args)
        .current_dir(dir)
        .env("SHIFTSCOPE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).trim().to_string()
}

fn covid_spec() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs/covid.json")
        .to_string_lossy()
        .into_owned()
}

fn rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn simulate_writes_both_samples_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = shiftscope(dir.path(), &["simulate", "--spec-path", &covid_spec(), "--out-prefix", "run/"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = dir.path().join("run");
    assert_eq!(rows(&run.join("source.csv")), 10_000);
    assert_eq!(rows(&run.join("target.csv")), 10_000);
    let header = std::fs::read_to_string(run.join("target.csv")).unwrap();
    assert!(!header.lines().next().unwrap().contains("diagnosis"));
    let truth: TruthFile = read_json(&run.join("truth.json")).unwrap();
    assert_eq!(truth.shift_feature_names, vec!["aged"]);
    assert_eq!(truth.cells.len(), 4);
    assert!(truth.true_target_accuracy.is_some());
}

#[test]
fn oversized_shift_set_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"kind": "joint", "shift_set": [0, 1], "target_marginal": [0.25, 0.25, 0.25, 0.25]}"#,
    )
    .unwrap();
    let out = shiftscope(dir.path(), &["simulate", "--spec-path", "spec.json", "--base-path", "binary:1"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.starts_with("error: INVALID_CONFIG:"), "{msg}");
    assert_eq!(msg.lines().count(), 1);
}

#[test]
fn empty_cell_names_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    // base 'y' and feature agree perfectly, so (x0 = 0, y = 1) has no rows
    std::fs::write(dir.path().join("base.csv"), "x0,y\n0,0\n1,1\n0,0\n1,1\n").unwrap();
    std::fs::write(
        dir.path().join("schema.json"),
        r#"{"columns": [{"name": "x0", "kind": "discrete", "categories": ["0", "1"]}],
            "label": {"name": "y", "categories": ["0", "1"]}}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"kind": "joint", "shift_set": [0], "target_marginal": [0.25, 0.25, 0.25, 0.25]}"#,
    )
    .unwrap();
    let out = shiftscope(
        dir.path(),
        &["simulate", "--spec-path", "spec.json", "--base-path", "base.csv", "--schema-path", "schema.json", "--n", "10"],
    );
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.starts_with("error: EMPTY_CELL:") && msg.contains("x0="), "{msg}");
}

fn one_sjs_pair(dir: &Path) {
    let Shift::Joint(spec) = one_sjs_scenario(6, 2).shift else {
        panic!("joint shift expected")
    };
    std::fs::write(dir.join("spec.json"), serde_json::to_string(&Shift::Joint(spec)).unwrap()).unwrap();
    let out = shiftscope(
        dir,
        &["simulate", "--spec-path", "spec.json", "--base-path", "binary:6", "--n", "10000", "--seed", "3"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
}

const PAIR: [&str; 6] = [
    "--source-path",
    "source.csv",
    "--target-path",
    "target.csv",
    "--schema-path",
    "schema.json",
];

#[test]
fn estimate_finds_the_shifted_feature() {
    let dir = tempfile::tempdir().unwrap();
    one_sjs_pair(dir.path());
    let mut args = vec!["estimate"];
    args.extend(PAIR);
    args.extend(["--truth-path", "truth.json", "--output-path", "report.json"]);
    let out = shiftscope(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr(&out));
    let reports = read_reports(&dir.path().join("report.json")).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].method, Method::SeesD);
    assert_eq!(reports[0].selected_features, vec![2]);
    assert_eq!(reports[0].selected_feature_names, vec!["x2"]);
    let m = reports[0].weight_metrics.unwrap();
    assert!(m.pcc > 0.9, "{m:?}");
}

#[test]
fn all_methods_report_in_order() {
    let dir = tempfile::tempdir().unwrap();
    one_sjs_pair(dir.path());
    let mut args = vec!["estimate"];
    args.extend(PAIR);
    args.extend(["--method", "all"]);
    let out = shiftscope(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = doc.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["SEES-c", "SEES-d", "BBSE", "KLIEP", "DLU"]);
    for r in &doc {
        assert!(r["delta_hat"].is_f64());
        for key in ["source_accuracy", "selected_features", "diagnostics", "weight_metrics"] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn prediction_files_replace_the_builtin_model() {
    let dir = tempfile::tempdir().unwrap();
    one_sjs_pair(dir.path());
    // predict class 2 exactly when x2 = 1
    for (name, data) in [("source.csv", "ps.csv"), ("target.csv", "pt.csv")] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let mut out = String::from("pred,p_1,p_2\n");
        for line in text.lines().skip(1) {
            let x2 = line.split(',').nth(2).unwrap();
            out.push_str(if x2 == "1" { "2,0.2,0.8\n" } else { "1,0.8,0.2\n" });
        }
        std::fs::write(dir.path().join(data), out).unwrap();
    }
    let mut args = vec!["estimate"];
    args.extend(PAIR);
    args.extend(["--predictions-path", "ps.csv", "--target-predictions-path", "pt.csv", "--method", "bbse"]);
    let out = shiftscope(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr(&out));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["method"], "BBSE");

    let mut lone = vec!["estimate"];
    lone.extend(PAIR);
    lone.extend(["--predictions-path", "ps.csv"]);
    let out = shiftscope(dir.path(), &lone);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: INVALID_CONFIG:"));
}

#[test]
fn missing_target_is_file_not_found() {
    let dir = tempfile::tempdir().unwrap();
    one_sjs_pair(dir.path());
    let out = shiftscope(
        dir.path(),
        &["estimate", "--source-path", "source.csv", "--target-path", "nope.csv", "--schema-path", "schema.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.starts_with("error: FILE_NOT_FOUND:"), "{msg}");
    assert_eq!(msg.lines().count(), 1);
}

#[test]
fn bad_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = shiftscope(dir.path(), &["estimate", "--method", "lasso"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: INVALID_ARGUMENTS:"));
    assert_eq!(stderr(&out).lines().count(), 1);

    let out = Command::new(env!("CARGO_BIN_EXE_shiftscope"))
        .args(["bench", "--suite", "robustness", "--seeds", "1"])
        .env("SHIFTSCOPE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: INVALID_CONFIG:"));
}

#[test]
fn bench_writes_runs_then_means() {
    let dir = tempfile::tempdir().unwrap();
    let out = shiftscope(dir.path(), &["bench", "--suite", "robustness", "--seeds", "2", "--out", "bench.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("suite,setting,seed,method"));
    // 3 shifts x 2 seeds x 5 methods, then 3 x 5 means
    assert_eq!(lines.len(), 1 + 30 + 15);
    assert!(lines[31..].iter().all(|l| l.split(',').nth(2) == Some("mean")));
}
