use serde_json::Value;
use std::process::Command;

fn run(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_scenario-mpc")).args(args).output().unwrap();
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("scenario-mpc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn samplesize_reports_minimal_count() {
    let (ok, out, _) = run(&["samplesize", "--p", "0.95", "--beta", "1e-9", "--d", "12", "--explicit"]);
    assert!(ok);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["M"], 893);
    assert_eq!(v["explicit_bound"], 1309);
    assert!(v["log_phi_at_M"].as_f64().unwrap() <= (1e-9f64).ln());
    assert!(v["log_phi_at_M_minus_1"].as_f64().unwrap() > (1e-9f64).ln());
}

#[test]
fn samplesize_rejects_bad_reliability() {
    let (ok, _, err) = run(&["samplesize", "--p", "1.5", "--beta", "1e-9", "--d", "12"]);
    assert!(!ok);
    assert!(!err.is_empty());
}

#[test]
fn solve_from_explicit_scenario_count() {
    let dump = scratch("prog.txt");
    let (ok, out, err) = run(&[
        "solve",
        "--x",
        "5,2.75",
        "-M",
        "20",
        "--strategy",
        "full",
        "--dump-program",
        dump.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["M"], 20);
    assert_eq!(v["solution"]["status"], "solved");
    assert_eq!(v["solution"]["v"].as_array().unwrap().len(), 10);
    assert!(v["solution"]["z"].as_f64().unwrap() >= v["distance"].as_f64().unwrap() - 1e-6);
    assert!(std::fs::read_to_string(dump).unwrap().starts_with("conic-program v1"));
}

#[test]
fn solve_accepts_negative_state() {
    let (ok, out, err) = run(&["solve", "--x", "-3,1", "--p", "0.05", "--beta", "1e-9"]);
    assert!(ok, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["M"], 23);
}

#[test]
fn simulate_and_montecarlo_round_trip() {
    let cfg = scratch("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"model": "paper-example", "x0": [5, 2.75], "N": 10, "p": 0.05, "beta": 1e-9,
            "epsilon": 0.1, "alpha": 1e4, "lambda": 1, "T_sim": 22, "n_trials": 3,
            "seed": 9, "mode": "both"}"#,
    )
    .unwrap();
    let trace = scratch("trace.csv");
    let (ok, out, err) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    assert!(ok, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["fh"]["failure_kind"].is_string() && v["rh"]["failure_kind"].is_string());
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,x1,x2,u1,case,z,q,z_star,q_star,dist,solver_iters");
    assert_eq!(csv.lines().count(), 1 + 23);

    let summary = scratch("summary.json");
    let (ok, _, err) = run(&["montecarlo", "--config", cfg.to_str().unwrap(), "--out", summary.to_str().unwrap()]);
    assert!(ok, "{err}");
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["n_trials"], 3);
    assert_eq!(s["M"], 23);
    for key in ["p_hat_fh", "p_hat_rh", "n_failures", "failure_kinds", "p", "beta", "seed", "wall_seconds"] {
        assert!(s.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn full_scale_flag_is_available() {
    let (ok, out, _) = run(&["montecarlo", "--help"]);
    assert!(ok);
    assert!(out.contains("--full"));
}
