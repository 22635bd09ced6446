//! End-to-end runs of the `suppressor-lab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_suppressor-lab"))
        .args(args)
        .env_remove("SUPPRESSOR_LAB_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const SETTING: [&str; 6] = ["--c", "0.8", "--s1sq", "0.8", "--s2sq", "0.5"];

fn with_setting<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(SETTING).collect()
}

#[test]
fn sample_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    let p = path.to_str().unwrap();
    let out = lab(&with_setting(&["sample", "--n", "1000", "--out", p]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,y"));
    assert_eq!(lines.count(), 1000);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1") || l.ends_with(",-1")));
}

#[test]
fn sample_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = lab(&with_setting(&["sample", "--n", "500", "--seed", seed, "--out", path.to_str().unwrap()]));
        assert!(out.status.success());
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a", "7"), run("b", "7"));
    assert_ne!(run("c", "7"), run("d", "8"));
}

#[test]
fn seed_environment_variable_overrides_default() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: Option<&str>, name: &str| {
        let path = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_suppressor-lab"));
        cmd.args(with_setting(&["sample", "--n", "50", "--out", path.to_str().unwrap()]));
        match env {
            Some(v) => cmd.env("SUPPRESSOR_LAB_SEED", v),
            None => cmd.env_remove("SUPPRESSOR_LAB_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(path).unwrap()
    };
    let default = run(None, "a");
    assert_eq!(default, run(Some("0xC0FFEE"), "b"));
    assert_eq!(default, run(Some("12648430"), "c"));
    assert_ne!(default, run(Some("1"), "d"));
}

#[test]
fn out_of_domain_parameters_exit_two() {
    let out = lab(&["sample", "--c", "1.5", "--s1sq", "0.8", "--s2sq", "0.5", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[-1, 1]"));
    assert!(out.stdout.is_empty());
    let out = lab(&["eval", "--method", "bogus", "--c", "0", "--s1sq", "1", "--s2sq", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_prints_attributions() {
    let out = lab(&with_setting(&["eval", "--method", "pattern"]));
    assert!(out.status.success());
    assert_eq!(json(&out)["e2"].as_f64(), Some(0.0));

    let out = lab(&["eval", "--method", "pfi", "--c", "0", "--s1sq", "0.8", "--s2sq", "0.5"]);
    let v = json(&out);
    assert!((v["e1"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(v["e2"].as_f64(), Some(0.0));

    let out = lab(&with_setting(&["eval", "--method", "shap_conditional", "--x1", "1", "--x2", "0"]));
    let v = json(&out);
    assert!((v["e1"].as_f64().unwrap() - 0.66876).abs() < 5e-5);
    assert!((v["e2"].as_f64().unwrap() - 0.03413).abs() < 5e-5);

    let out = lab(&with_setting(&["eval", "--method", "integrated_gradients", "--x1", "1", "--x2", "-1", "--baseline", "0.5,0"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = lab(&with_setting(&["eval", "--method", "pd"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn figure_emits_long_format_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig3.csv");
    let out = lab(&["figure", "--id", "fig3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("c,s1sq,s2sq,method,feature,value"));
    assert!(text.lines().count() > 100);
    let out = lab(&["figure", "--id", "fig9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_json_follows_report_schema() {
    let out = lab(&[
        "sweep",
        "--quick",
        "--format",
        "json",
        "--c-values",
        "0.8",
        "--s1sq-values",
        "0.8",
        "--s2sq-values",
        "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    for key in ["meta", "rows", "verdicts", "discrepancies"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let row = &v["rows"][0];
    for key in ["method", "feature", "analytic_value", "empirical_value", "std_error", "tolerance", "pass"] {
        assert!(row.get(key).is_some(), "row missing {key}");
    }
    assert_eq!(v["verdicts"]["pattern"]["verdict"], "suppressor-nullifying");
    assert_eq!(v["verdicts"]["gradient"]["verdict"], "suppressor-attributing");
}

#[test]
fn verify_prints_one_line_per_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("verify.json");
    let out = lab(&["verify", "--quick", "--json", report.to_str().unwrap()]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().filter(|l| l.contains("criterion")).collect();
    assert_eq!(lines.len(), 8, "{text}");
    let all_pass = lines.iter().all(|l| l.starts_with("[PASS]"));
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 1 }));
    assert!(Path::new(&report).exists());
}
