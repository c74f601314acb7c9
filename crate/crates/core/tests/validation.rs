use cdmodel::analytic::{recover_p0, AnalyticError};
use cdmodel::validation::{run_battery, run_criterion, Criterion, ValidationConfig};

fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Orbit-probability recovery with the alternating sign dropped.
fn recover_without_sign(q: &[f64]) -> Result<Vec<f64>, AnalyticError> {
    let k = q.len();
    Ok((0..k)
        .map(|n| {
            (0..=n)
                .map(|m| choose(k - 1 - n + m, m) * q[k - 1 - n + m])
                .sum()
        })
        .collect())
}

#[test]
fn sign_mutation_is_caught_by_chain_equivalence() {
    let good = ValidationConfig::default();
    assert!(run_criterion(Criterion::A2, &good).passed);
    let bad = ValidationConfig {
        recover_p0: recover_without_sign,
        ..good
    };
    let r = run_criterion(Criterion::A2, &bad);
    assert!(!r.passed, "{}", r.line());
    assert!(r.measured["max_scaled_p0_gap"].as_f64().unwrap() > 1.0);
}

#[test]
fn reference_recovery_is_the_default() {
    let cfg = ValidationConfig::default();
    let q = [0.25, 0.1, 0.05];
    assert_eq!((cfg.recover_p0)(&q), recover_p0(&q));
}

#[test]
fn battery_reports_each_selected_criterion_in_order() {
    let cfg = ValidationConfig {
        mc_samples: 20_000,
        ..ValidationConfig::default()
    };
    let report = run_battery(&[Criterion::A6, Criterion::A1], &cfg);
    let ids: Vec<Criterion> = report.criteria.iter().map(|c| c.id).collect();
    assert_eq!(ids, [Criterion::A6, Criterion::A1]);
    assert!(report.passed);
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["schema"], 1);
    assert_eq!(json["criteria"][0]["block"], "median");
    assert!(report.criteria[1].line().starts_with("A1 PASS [exact]"));
}
