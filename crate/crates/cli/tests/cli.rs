use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ergocount"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ergocount-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn report(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("JSON report on stdout")
}

#[test]
fn passing_run_exits_zero() {
    let out = run(&["oracle-suite", "--cases", "40"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["command"], "oracle-suite");
    assert_eq!(r["claims"].as_array().unwrap().len(), 40);
}

#[test]
fn failing_claim_exits_one() {
    let out = run(&["base", "--corrupt-support"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("base.f.residue"));
}

#[test]
fn budget_error_exits_two_with_estimate() {
    let out = run(&["pblock", "--p", "3", "--relaxed"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("65625136"));
}

#[test]
fn estimate_only() {
    let out = run(&["pblock", "--p", "24", "--estimate-only"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(report(&out)["info"]["size_estimate"].is_string());
}

#[test]
fn config_file_and_out_path() {
    let cfg = scratch("seq.json");
    std::fs::write(&cfg, r#"{"command": "analog", "op": "seq", "values": ["1"], "k": 10}"#).unwrap();
    let out_path = scratch("seq-report.json");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(r["info"]["value"], "1/2");
}

#[test]
fn same_seed_same_bytes() {
    let a = run(&["--seed", "7", "oracle-suite", "--cases", "30"]);
    let b = run(&["--seed", "7", "oracle-suite", "--cases", "30"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(report(&a)["info"]["seed"], "7");
}

#[test]
fn analog_point_evaluation() {
    let f = scratch("half.json");
    std::fs::write(&f, r#"[{"value": "1", "support": [{"start": "0", "end": "1/2", "constraints": []}]}]"#).unwrap();
    let out = run(&["analog", "hl", "--input", f.to_str().unwrap(), "--x", "3/4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out)["info"]["value"], "2/3");
}

#[test]
fn render_draws_rows() {
    let out = run(&["render", "--width", "24"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("B_")).count(), 4);
}

#[test]
fn config_and_subcommand_conflict() {
    let cfg = scratch("x.json");
    std::fs::write(&cfg, r#"{"command": "oracle-suite"}"#).unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "oracle-suite"]);
    assert_eq!(out.status.code(), Some(2));
}
