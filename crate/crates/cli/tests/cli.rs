use std::path::Path;
use std::process::{Command, Output};

fn cdmodel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdmodel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn dist_curves(text: &str) -> Vec<(f64, f64, f64, String)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,pdf,cdf,semantics"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
                f[3].to_string(),
            )
        })
        .collect()
}

#[test]
fn dist_linear_case_has_monotone_cdf() {
    let o = cdmodel(&[
        "dist",
        "--case",
        "linear",
        "--mu",
        "0.1",
        "--timeout",
        "3",
        "--alpha",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = dist_curves(&stdout(&o));
    for label in ["defective", "conditioned"] {
        let curve: Vec<_> = rows.iter().filter(|r| r.3 == label).collect();
        assert_eq!(curve.len(), 600);
        assert!((curve.last().unwrap().0 - 36.0).abs() < 1e-12);
        assert!(curve
            .windows(2)
            .all(|w| w[1].2 >= w[0].2 && w[1].0 > w[0].0));
        assert!(curve.iter().all(|r| r.1 >= 0.0));
    }
}

#[test]
fn dist_nonlinear_defective_limit() {
    let o = cdmodel(&[
        "dist",
        "--case",
        "nonlinear",
        "--mu",
        "0.1",
        "--timeout",
        "3",
        "--alpha",
        "3",
        "--bandwidth",
        "1",
        "--noise",
        "2",
        "--tmax",
        "400",
        "--points",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = dist_curves(&stdout(&o));
    let limit = (-2.0f64 * 3.0 * 2.0 * (2f64.powf(1.0 / 3.0) - 1.0)).exp();
    let def = rows.iter().rfind(|r| r.3 == "defective").unwrap();
    assert!((def.2 - limit).abs() < 1e-6, "{} vs {limit}", def.2);
    let cond = rows.iter().rfind(|r| r.3 == "conditioned").unwrap();
    assert!((cond.2 - 1.0).abs() < 1e-6);
}

#[test]
fn degenerate_grid_is_a_usage_error() {
    assert_eq!(cdmodel(&["dist", "--tmax", "0"]).status.code(), Some(2));
    assert_eq!(cdmodel(&["dist", "--points", "0"]).status.code(), Some(2));
}

#[test]
fn invalid_flags_are_usage_errors() {
    assert_eq!(cdmodel(&["solve", "--bogus"]).status.code(), Some(2));
    assert_eq!(cdmodel(&["solve", "--k", "1"]).status.code(), Some(2));
    assert_eq!(
        cdmodel(&["solve", "--semantics", "bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(
        cdmodel(&["solve", "--format", "csv"]).status.code(),
        Some(2)
    );
    assert_eq!(
        cdmodel(&["simulate", "--warmup", "5", "--horizon", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cdmodel(&["validate", "--only", "nothing"]).status.code(),
        Some(2)
    );
}

#[test]
fn solve_report_has_fixed_fields() {
    let o = cdmodel(&[
        "solve",
        "--k",
        "2",
        "--lambda",
        "1",
        "--gamma",
        "1",
        "--mu",
        "1",
        "--oracle-exponential",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        ["C", "E_BP", "L", "LS", "W", "WS", "p0", "p1", "q", "v"]
    );
    assert!((v["W"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["E_BP"].as_f64().unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn solve_uses_channel_holding_time() {
    let o = cdmodel(&[
        "solve",
        "--k",
        "5",
        "--lambda",
        "0.2",
        "--mu",
        "1",
        "--timeout",
        "3",
        "--grid-points",
        "4096",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let p1 = v["p1"].as_f64().unwrap();
    assert!(p1 > 0.0 && p1 < 1.0);
    assert_eq!(v["q"].as_array().unwrap().len(), 5);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"k": 2, "lambda": 1, "gamma": 1, "mu": 1, "oracle_exponential": true}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file: serde_json::Value =
        serde_json::from_str(&stdout(&cdmodel(&["solve", "--config", cfg]))).unwrap();
    assert!((from_file["E_BP"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    let o = cdmodel(&["solve", "--config", cfg, "--k", "3"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["q"].as_array().unwrap().len(), 3);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kk": 2}"#).unwrap();
    assert_eq!(
        cdmodel(&["solve", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simulate_writes_estimates_and_per_replication_rows() {
    let dir = tempfile::tempdir().unwrap();
    let per_rep = dir.path().join("reps.csv");
    let out = dir.path().join("est.json");
    let o = cdmodel(&[
        "simulate",
        "--k",
        "3",
        "--reps",
        "3",
        "--horizon",
        "2000",
        "--seed",
        "9",
        "--per-rep",
        per_rep.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let est: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(est["replications"], 3);
    assert_eq!(est["master_seed"], 9);
    let csv = std::fs::read_to_string(&per_rep).unwrap();
    assert_eq!(csv.lines().next(), Some("rep,metric,value"));
    assert_eq!(csv.lines().count(), 1 + 3 * 12);
}

fn sweep_csv(dir: &Path, name: &str, extra: &[&str]) -> (Option<i32>, String) {
    let path = dir.join(name);
    let mut args = vec!["sweep", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = cdmodel(&args);
    (
        o.status.code(),
        std::fs::read_to_string(&path).unwrap_or_default(),
    )
}

#[test]
fn single_theory_value_gives_one_row_per_metric() {
    let dir = tempfile::tempdir().unwrap();
    let (code, csv) = sweep_csv(
        dir.path(),
        "s.csv",
        &["--engines", "theory", "--values", "2"],
    );
    assert_eq!(code, Some(0));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "case,K,inv_lambda,gamma,mu,T,alpha,B,N,semantics,engine,metric,value,ci_low,ci_high,seed"
    );
    assert_eq!(lines.len(), 1 + 7);
    assert!(lines[1..]
        .iter()
        .all(|l| l.contains(",theory,") && l.ends_with(",,,")));
}

#[test]
fn figure_sweep_row_count_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--k",
        "10",
        "--mu",
        "0.1",
        "--timeout",
        "3",
        "--gamma",
        "0.5",
        "--bandwidth",
        "1",
        "--noise",
        "1",
        "--alpha",
        "1",
        "--values",
        "1,2,3,4,5,6,7,8,9,10",
        "--reps",
        "2",
        "--horizon",
        "500",
        "--seed",
        "4",
        "--grid-points",
        "8192",
    ];
    let (code, a) = sweep_csv(dir.path(), "a.csv", &args);
    assert_eq!(code, Some(0));
    let (_, b) = sweep_csv(dir.path(), "b.csv", &args);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1 + 2 * 7 * 10);
    assert!(a
        .lines()
        .filter(|l| l.contains(",sim,"))
        .all(|l| l.ends_with(",4")));
}

#[test]
fn sweep_rejects_bad_specs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        sweep_csv(dir.path(), "x.csv", &["--values", "2,1"]).0,
        Some(2)
    );
    assert_eq!(sweep_csv(dir.path(), "x.csv", &[]).0, Some(2));
    assert_eq!(
        sweep_csv(
            dir.path(),
            "x.csv",
            &["--case", "linear", "--vary", "B", "--values", "1"]
        )
        .0,
        Some(2)
    );
    assert_eq!(
        sweep_csv(dir.path(), "x.csv", &["--vary", "mu", "--values", "1"]).0,
        Some(2)
    );
}

#[test]
fn failed_point_gives_error_row_and_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let (code, csv) = sweep_csv(
        dir.path(),
        "f.csv",
        &[
            "--semantics",
            "defective-renormalized",
            "--engines",
            "theory",
            "--values",
            "1",
            "--alpha",
            "10000",
        ],
    );
    assert_eq!(code, Some(1));
    assert!(csv.lines().nth(1).unwrap().contains(",theory,error,"));
}

#[test]
fn validate_only_runs_selected_block() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let o = cdmodel(&["validate", "--only", "ctmc", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["passed"], true);
    let crit = v["criteria"].as_array().unwrap();
    assert_eq!(crit.len(), 1);
    assert_eq!(crit[0]["id"], "A2");
    assert!(crit[0]["measured"]["max_rel_metric_gap"].as_f64().unwrap() <= 1e-6);
}
