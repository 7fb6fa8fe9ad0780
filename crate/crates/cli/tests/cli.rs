use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proactive"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn error_doc(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("error is JSON")
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenario("two_user.toml")).unwrap();
    std::fs::write(&path, text.replace("[cost]\n", "[cost]\nwidth = 3\n")).unwrap();
    let out = run(&["simulate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let doc = error_doc(&out);
    assert_eq!(doc["error"], "scenario");
    assert!(doc["message"].as_str().unwrap().contains("width"), "{doc}");
}

#[test]
fn zero_samples_is_an_argument_error() {
    let s = scenario("two_user.toml");
    let out = run(&["simulate", "--scenario", s.to_str().unwrap(), "--samples", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_doc(&out)["error"], "argument");
}

#[test]
fn analytic_engine_rejected_for_outage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("outage.toml");
    let text = std::fs::read_to_string(scenario("two_user.toml")).unwrap();
    std::fs::write(&path, text.replace("kind = \"quadratic\"", "kind = \"outage\"\nmu = 9.8")).unwrap();
    let out = run(&["simulate", "--scenario", path.to_str().unwrap(), "--engine", "analytic_quadratic"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_doc(&out)["error"], "unsupported_engine");
}

#[test]
fn simulate_reports_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("slots.csv");
    let s = scenario("two_user.toml");
    let out = run(&["simulate", "--scenario", s.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["metrics"]["c_nonproactive"].as_f64().unwrap() - 19.56).abs() < 1e-10);
    assert_eq!(report["scenario_hash"].as_str().unwrap().len(), 64);
    assert!(report["files"]["slots.csv"].is_string());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("slot,engine,value,stderr\n"));
}

#[test]
fn monte_carlo_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("two_user.toml");
    let mut texts = Vec::new();
    for k in 0..2 {
        let csv = dir.path().join(format!("run{k}.csv"));
        let out = run(&[
            "simulate",
            "--scenario",
            s.to_str().unwrap(),
            "--samples",
            "10000",
            "--seed",
            "11",
            "--out",
            csv.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        texts.push(std::fs::read(&csv).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn optimize_and_shape_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("two_user.toml");
    let x = dir.path().join("x.csv");
    let out = run(&["optimize", "--scenario", s.to_str().unwrap(), "--bounds", "--out", x.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = &report["metrics"];
    assert!(m["c_proactive"].as_f64().unwrap() < m["c_nonproactive"].as_f64().unwrap());
    assert!(m["bounds"]["lower"].as_f64().unwrap() <= m["delta_c"].as_f64().unwrap());
    assert_eq!(std::fs::read_to_string(&x).unwrap().lines().count(), 1 + 2 * 2 * 3);

    let trace = dir.path().join("trace.csv");
    let profile = dir.path().join("profile.csv");
    let out = run(&[
        "shape",
        "--scenario",
        s.to_str().unwrap(),
        "--alpha",
        "0.2",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        profile.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("iter,f0,residual\n"));
    let f0: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(f0.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn recommend_writes_ratings() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    let r = dir.path().join("r.json");
    let v = dir.path().join("v.csv");
    std::fs::write(&p, r#"[{"target": [0.28, 0.199, 0.421], "silence": 0.1}]"#).unwrap();
    std::fs::write(&r, "[[0.3, 0.1, 0.6]]").unwrap();
    let out = run(&[
        "recommend",
        "--profile",
        p.to_str().unwrap(),
        "--ratings",
        r.to_str().unwrap(),
        "--out",
        v.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&v).unwrap();
    assert_eq!(text.lines().next(), Some("row,item,rating"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn reproduce_two_user_writes_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("q");
    let out = run(&["reproduce-paper", "two-user-quadratic", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["sweep.csv", "trace.csv", "table.csv", "report.json"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "reproduce-paper two-user-quadratic");
    assert!(report["files"]["sweep.csv"].is_string());
}

#[test]
fn scale_writes_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scaling.csv");
    let out = run(&["scale", "--family", "zipf", "--N", "5,10,20", "--seed", "3", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("N,c_nonproactive,c_proactive,delta_c,ratio,stderr"));
    assert_eq!(text.lines().count(), 4);

    let out = run(&["scale", "--family", "pareto"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_doc(&out)["error"], "invalid_input");
}
