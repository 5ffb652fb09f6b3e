use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eqlearn::{Economy, ParametricUtility};
use serde_json::Value;

fn eqlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqlearn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_golden(dir: &Path) -> String {
    let u = |t: [f64; 2]| ParametricUtility::linear(t.to_vec()).unwrap();
    let e = Economy::new(
        vec![vec![0.45, 0.05], vec![0.45, 0.05], vec![0.1, 0.9]],
        vec![u([0.1, 1.0]), u([0.2, 1.0]), u([1.0, 0.1])],
        0.0,
    )
    .unwrap();
    let path = dir.join("golden.json");
    fs::write(&path, serde_json::to_string_pretty(&e.to_file()).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn schedule_lists_every_initialization_round() {
    let text = stdout(&eqlearn(&["schedule", "--n", "2", "--m", "2"]));
    let rounds: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rounds.len(), 8);
    assert!(rounds[0].starts_with("1: "));
    assert!(!eqlearn(&["schedule", "--n", "0", "--m", "2"])
        .status
        .success());
}

#[test]
fn solve_writes_a_certified_result_that_losses_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let economy = write_golden(dir.path());
    for solver in ["pr", "tatonnement"] {
        let result = dir.path().join(format!("{solver}.json"));
        let printed = stdout(&eqlearn(&[
            "solve",
            "--economy",
            &economy,
            "--solver",
            solver,
            "--iters",
            "5000",
            "--tol",
            "1e-6",
            "--out",
            result.to_str().unwrap(),
        ]));
        assert_eq!(printed.trim(), result.to_str().unwrap());
        let v: Value = serde_json::from_str(&fs::read_to_string(&result).unwrap()).unwrap();
        let prices: Vec<f64> = serde_json::from_value(v["prices"].clone()).unwrap();
        assert!(
            prices.iter().all(|p| (p - 0.5).abs() < 1e-3),
            "{solver}: {prices:?}"
        );
        assert_eq!(v["certificate"]["is_equilibrium"], Value::Bool(true));
        assert_eq!(v["allocation"].as_array().unwrap().len(), 3);

        let report: Value = serde_json::from_str(&stdout(&eqlearn(&[
            "losses",
            "--economy",
            &economy,
            "--outcome",
            result.to_str().unwrap(),
        ])))
        .unwrap();
        assert!(report["l_ce"].as_f64().unwrap() < 1e-6, "{report}");
        assert_eq!(report["l_si"].as_f64(), Some(0.0));
    }
}

#[test]
fn solve_prints_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let economy = write_golden(dir.path());
    let v: Value =
        serde_json::from_str(&stdout(&eqlearn(&["solve", "--economy", &economy]))).unwrap();
    assert!(v["prices"].is_array() && v["certificate"].is_object());
}

#[test]
fn losses_reports_the_alternative_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let economy = write_golden(dir.path());
    let outcome = dir.path().join("alt.json");
    fs::write(
        &outcome,
        r#"{"allocation": [[0.35, 0.49], [0.35, 0.49], [0.3, 0.02]], "prices": [0.5, 0.5]}"#,
    )
    .unwrap();
    let report: Value = serde_json::from_str(&stdout(&eqlearn(&[
        "losses",
        "--economy",
        &economy,
        "--outcome",
        outcome.to_str().unwrap(),
    ])))
    .unwrap();
    assert!((report["l_ce"].as_f64().unwrap() - 0.698).abs() < 1e-9);
    assert!((report["l_pe_upper"].as_f64().unwrap() - 0.698).abs() < 1e-6);
    assert_eq!(report["l_si"].as_f64(), Some(0.0));
}

#[test]
fn run_writes_rounds_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        r#"{"economy": {"generator": {"n": 2, "m": 2, "family": "amdahl", "f": 0.3}},
            "horizon": 20, "seeds": [1, 2]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let text = stdout(&eqlearn(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(text.contains("rounds.csv") && text.contains("summary.csv"));
    let rounds = fs::read_to_string(out.join("rounds.csv")).unwrap();
    let mut lines = rounds.lines();
    assert_eq!(
        lines.next(),
        Some(
            "run_id,t,phase,l_ce,l_si,l_pe_upper,l_fd_upper,cum_l_ce,cum_l_fd_upper,a_holds,b_holds,rho,ce_warn"
        )
    );
    assert_eq!(lines.count(), 40);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 21);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("short.json");
    fs::write(
        &config,
        r#"{"economy": {"generator": {"n": 2, "m": 2, "family": "linear"}},
            "horizon": 8, "seeds": [1]}"#,
    )
    .unwrap();
    let o = eqlearn(&["run", "--config", config.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("T > m^2 max(n, m) = 8"));

    let missing = dir.path().join("nope.json");
    let o = eqlearn(&["solve", "--economy", missing.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}
