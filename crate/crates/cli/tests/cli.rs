use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ipac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipac"))
        .args(args)
        .output()
        .expect("spawn ipac")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn preset(dir: &Path, id: &str) -> PathBuf {
    let path = dir.join(format!("s{id}.json"));
    let out = ipac(&["preset", "--scenario", id, "--out", p(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

#[test]
fn run_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset(dir.path(), "1");
    let report = dir.path().join("report.json");
    let out = ipac(&["run", "--config", p(&cfg), "--out", p(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v["power_total_w"].as_f64().unwrap() > 0.0);
}

#[test]
fn unreachable_target_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset(dir.path(), "1");
    let report = dir.path().join("report.json");
    let out = ipac(&[
        "run",
        "--config",
        p(&cfg),
        "--set",
        "peb_threshold_m=[1e-9,1e-9,1e-9]",
        "--out",
        p(&report),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["status"], "infeasible");
    assert!(v["binding"]
        .as_array()
        .unwrap()
        .iter()
        .any(|b| b.as_str().unwrap().starts_with("peb")));
}

#[test]
fn missing_config_exits_one() {
    let out = ipac(&["run", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("/nonexistent/cfg.json"));
}

#[test]
fn validate_reports_bad_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset(dir.path(), "2");
    assert_eq!(code(&ipac(&["validate", "--config", p(&cfg)])), 0);
    let out = ipac(&["validate", "--config", p(&cfg), "--set", "obstruction=[1,0]"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("obstruction"), "{}", stderr(&out));
    let out = ipac(&[
        "validate",
        "--config",
        p(&cfg),
        "--set",
        r#"phase_mode={"kind":"discrete","q_bits":0}"#,
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("q_bits"), "{}", stderr(&out));
}

#[test]
fn fim_check_exit_codes() {
    let out = ipac(&["fim-check", "--instances", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = ipac(&["fim-check", "--instances", "2", "--fault-delta-f", "1.01"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn solve_sdp_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok.json");
    std::fs::write(
        &ok,
        r#"{"blocks":[{"kind":"nonneg","size":2}],
            "objective":[{"block":0,"coeff":{"format":"sparse","entries":[[0,0,1.0],[1,1,2.0]]}}],
            "constraints":[{"terms":[{"block":0,"coeff":{"format":"sparse","entries":[[0,0,1.0],[1,1,1.0]]}}],
                            "relation":"=","rhs":1.0}]}"#,
    )
    .unwrap();
    let sol = dir.path().join("sol.json");
    let out = ipac(&["solve-sdp", "--config", p(&ok), "--out", p(&sol)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    assert!((v["primal_objective"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"blocks":[{"kind":"nonneg","size":1}],
            "objective":[{"block":0,"coeff":{"format":"sparse","entries":[[0,0,1.0]]}}],
            "constraints":[{"terms":[{"block":0,"coeff":{"format":"sparse","entries":[[0,0,1.0]]}}],
                            "relation":"=","rhs":-1.0}]}"#,
    )
    .unwrap();
    assert_eq!(code(&ipac(&["solve-sdp", "--config", p(&bad)])), 2);
}

#[test]
fn sweep_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    let out = ipac(&[
        "sweep",
        "--scenario",
        "1",
        "--param",
        "rate",
        "--values",
        "0,1",
        "--fixed",
        "1",
        "--modes",
        "continuous",
        "--seeds",
        "1",
        "--out",
        p(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&ipac(&["no-such-command"])), 1);
    assert_eq!(code(&ipac(&["--help"])), 0);
}
