use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipm-pacbayes"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const SMALL_DIRAC: &str = r#"{
  "m_values": [20, 40],
  "repetitions": 2,
  "sigma_p": 0.0,
  "sigma_q": 0.0,
  "objective": "WPB",
  "n_test": 200,
  "master_seed": 3,
  "optimizer": { "max_epochs": 30 }
}"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(&path, SMALL_DIRAC).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn klpb_classic_value() {
    let out = run(&[
        "bound",
        "klpb-classic",
        "--kl",
        "1",
        "--m",
        "100",
        "--delta",
        "0.05",
    ]);
    assert_eq!(out.status.code(), Some(0));
    // sqrt((1 + ln 2000) / 198)
    let v = json(&out)["bound_value"].as_f64().unwrap();
    assert!((v - 0.20842001178106337).abs() < 1e-12, "{v}");
}

#[test]
fn uc_linreg_value() {
    let out = run(&[
        "bound",
        "uc-linreg",
        "--m",
        "100",
        "--delta",
        "0.05",
        "--d",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out)["value"].as_f64().unwrap();
    assert!((v - 6.5964073811864197).abs() < 1e-12, "{v}");
}

#[test]
fn tv_of_equal_measures_is_zero() {
    let out = run(&["divergence", "tv", "--q", "0.2,0.8", "--p", "0.2,0.8"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["value"].as_f64(), Some(0.0));
}

#[test]
fn w1_from_json_operands() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.json");
    fs::write(&q, "[0.7, 0.3]").unwrap();
    let q = format!("@{}", q.display());
    let out = run(&[
        "divergence",
        "w1-finite",
        "--q",
        &q,
        "--p",
        "0.3,0.7",
        "--line",
        "0,2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["value"].as_f64().unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn undefined_kl_exits_2() {
    let out = run(&[
        "divergence",
        "kl-gaussian",
        "--mu-q",
        "0,0",
        "--sigma-q",
        "0.1",
        "--mu-p",
        "0,0",
        "--sigma-p",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["value"], "undefined");
}

#[test]
fn usage_errors_exit_1() {
    let out = run(&[
        "bound", "tvpb-vc", "--vc", "3", "--tv", "0.1", "--m", "100", "--delta", "0.05",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--c"));
    assert_eq!(run(&["verify", "no-such-suite"]).status.code(), Some(1));
    assert_eq!(
        run(&["bound", "klpb-classic", "--kl", "1"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["divergence", "tv", "--q", "0.5,x", "--p", "1,0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_with_vacuous_delta_passes() {
    let out = run(&["verify", "validity", "--delta", "1.0"]);
    assert_eq!(out.status.code(), Some(0));
    let reports = json(&out);
    assert!(reports
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["pass"] == true));
}

#[test]
fn experiment_outputs_and_undefined_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "experiment",
        "--config",
        &cfg,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], ipm_pacbayes::experiment::CSV_HEADER);
    assert_eq!(lines.len(), 3);
    for (line, m) in lines[1..].iter().zip(["20", "40"]) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 11);
        assert_eq!(cells[0], m);
        assert_eq!(&cells[9..], ["undefined", "undefined"]);
    }
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("results.json")).unwrap()).unwrap();
    assert_eq!(meta["metadata"]["master_seed"], 3);
    assert!(fs::read_to_string(out_dir.join("plot.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn results_json_reproduces_its_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run(&[
        "experiment",
        "--config",
        &cfg,
        "--out-dir",
        a.to_str().unwrap(),
    ]);
    assert_eq!(first.status.code(), Some(0));
    let again = a.join("results.json");
    let second = run(&[
        "experiment",
        "--config",
        again.to_str().unwrap(),
        "--out-dir",
        b.to_str().unwrap(),
    ]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(
        fs::read(a.join("results.csv")).unwrap(),
        fs::read(b.join("results.csv")).unwrap()
    );

    let other = run(&[
        "experiment",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--out-dir",
        b.to_str().unwrap(),
    ]);
    assert_eq!(other.status.code(), Some(0));
    assert_ne!(
        fs::read(a.join("results.csv")).unwrap(),
        fs::read(b.join("results.csv")).unwrap()
    );
}

#[test]
fn unwritable_out_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let target = blocker.join("sub");
    let out = run(&[
        "experiment",
        "--config",
        &cfg,
        "--out-dir",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
