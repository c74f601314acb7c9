//! Acceptance battery: exact anchors, Markov-chain equivalence, distribution
//! checks against Monte Carlo and quadrature, theory against simulation,
//! the round-trip median ordering, and sweep reproducibility.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic::{
    performance_metrics, performance_metrics_with, recover_p0, recursion_residuals,
    regenerative_busy_period, unit_lst, AnalyticError, Exponential, QueueParams,
};
use crate::channel::ChannelModel;
use crate::oracle::{ctmc_metrics, ks_distance, CtmcSpec};
use crate::simulator::{run_experiment, sample_transaction, SimConfig};
use crate::sweep::{run_sweep, to_csv, Engines, Series, SweepSpec, SweepVariable};
use crate::timedist::oracle::{f_nonlinear_oracle, fy_linear_oracle};
use crate::timedist::{
    convolve, exponential_dist, oneway_com_dist, total_time_distribution, GridSpec,
    HoldingSemantics, SemanticsMode, SERVICE_TAIL_EPS,
};

/// Version of the JSON report layout.
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
    A7,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::A1,
        Criterion::A2,
        Criterion::A3,
        Criterion::A4,
        Criterion::A5,
        Criterion::A6,
        Criterion::A7,
    ];

    /// Short name used to select the criterion on the command line.
    pub fn block(self) -> &'static str {
        match self {
            Criterion::A1 => "exact",
            Criterion::A2 => "ctmc",
            Criterion::A3 => "dist",
            Criterion::A4 => "quadrature",
            Criterion::A5 => "end-to-end",
            Criterion::A6 => "median",
            Criterion::A7 => "repro",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Criterion::A1 => "two-client exponential case reproduces hand-computed values",
            Criterion::A2 => "exponential holding time matches the Markov chain",
            Criterion::A3 => "grid distributions match protocol Monte Carlo",
            Criterion::A4 => "grid distributions match direct quadrature",
            Criterion::A5 => "analytic metrics inside simulation intervals; monotone trends",
            Criterion::A6 => "linear capacity gives the smaller conditioned round-trip median",
            Criterion::A7 => "identical sweeps produce identical CSV",
        }
    }

    /// Wall-clock budget in seconds.
    pub fn budget(self) -> f64 {
        match self {
            Criterion::A1 => 1.0,
            Criterion::A2 => 30.0,
            Criterion::A3 | Criterion::A4 => 60.0,
            Criterion::A5 => 900.0,
            Criterion::A6 | Criterion::A7 => f64::INFINITY,
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.block() == s || format!("{c:?}").eq_ignore_ascii_case(s))
    }
}

pub type P0Recovery = fn(&[f64]) -> Result<Vec<f64>, AnalyticError>;

#[derive(Debug, Clone, Copy)]
pub struct ValidationConfig {
    /// Orbit-probability recovery under test.
    pub recover_p0: P0Recovery,
    pub seed: u64,
    pub mc_samples: usize,
    pub replications: usize,
    pub horizon: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            recover_p0,
            seed: 20240101,
            mc_samples: 1_000_000,
            replications: 30,
            horizon: 1e5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: Criterion,
    pub block: String,
    pub title: String,
    pub passed: bool,
    pub seconds: f64,
    pub measured: Value,
}

impl CriterionReport {
    /// One-line summary.
    pub fn line(&self) -> String {
        format!(
            "{:?} {} [{}] {:.2}s {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.block,
            self.seconds,
            self.measured
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema: u32,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

pub fn run_battery(criteria: &[Criterion], cfg: &ValidationConfig) -> ValidationReport {
    let reports: Vec<CriterionReport> = criteria.iter().map(|c| run_criterion(*c, cfg)).collect();
    ValidationReport {
        schema: REPORT_SCHEMA,
        passed: reports.iter().all(|r| r.passed),
        criteria: reports,
    }
}

pub fn run_criterion(c: Criterion, cfg: &ValidationConfig) -> CriterionReport {
    let start = Instant::now();
    let (ok, measured) = match c {
        Criterion::A1 => exact_anchor(cfg),
        Criterion::A2 => chain_equivalence(cfg),
        Criterion::A3 => monte_carlo_distributions(cfg),
        Criterion::A4 => quadrature_agreement(),
        Criterion::A5 => theory_vs_simulation(cfg),
        Criterion::A6 => median_ordering(),
        Criterion::A7 => sweep_reproducibility(cfg),
    };
    let seconds = start.elapsed().as_secs_f64();
    CriterionReport {
        id: c,
        block: c.block().to_string(),
        title: c.title().to_string(),
        passed: ok && seconds < c.budget(),
        seconds,
        measured,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn exact_anchor(cfg: &ValidationConfig) -> (bool, Value) {
    let params = QueueParams::new(2, 1.0, 1.0, 1.0, 1.0).expect("valid parameters");
    let r = match performance_metrics_with(&params, &Exponential { rate: 1.0 }, cfg.recover_p0) {
        Ok(r) => r,
        Err(e) => return (false, json!({ "error": e.to_string() })),
    };
    let pairs = [
        (r.p1, 2.0 / 3.0),
        (r.l, 2.0 / 3.0),
        (r.w, 1.0),
        (r.ls, 4.0 / 3.0),
        (r.ws, 2.0),
        (r.e_bp, 4.0),
        (r.q[0], 1.0 / 3.0),
        (r.q[1], 1.0 / 9.0),
        (r.c[0], 3.0),
        (r.c[1], 1.0),
        (r.p0[0], 1.0 / 9.0),
        (r.p0[1], 2.0 / 9.0),
    ];
    let worst = pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (worst <= 1e-9, json!({ "max_abs_error": worst }))
}

fn chain_equivalence(cfg: &ValidationConfig) -> (bool, Value) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut metric_gap, mut p0_gap, mut residual, mut regen): (f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0);
    let mut errors = Vec::new();
    for k in 2..=15 {
        for _ in 0..50 {
            let lambda = rng.random_range(0.1..=5.0);
            let gamma = rng.random_range(0.1..=5.0);
            let nu = rng.random_range(0.1..=5.0);
            let params = QueueParams::new(k, lambda, gamma, nu, 1.0).expect("valid parameters");
            let hold = Exponential { rate: nu };
            let exact = match ctmc_metrics(&CtmcSpec {
                k,
                lambda,
                gamma,
                nu,
            }) {
                Ok(r) => r,
                Err(e) => {
                    errors.push(e.to_string());
                    continue;
                }
            };
            let got = match performance_metrics_with(&params, &hold, cfg.recover_p0) {
                Ok(r) => r,
                Err(e) => {
                    errors.push(e.to_string());
                    continue;
                }
            };
            for (a, b) in [
                (got.p1, exact.p1),
                (got.l, exact.l),
                (got.w, exact.w),
                (got.ls, exact.ls),
                (got.ws, exact.ws),
                (got.e_bp, exact.e_bp),
            ] {
                metric_gap = metric_gap.max(rel(a, b));
            }
            for (a, b) in got.p0.iter().zip(&exact.p0) {
                // scaled so that 1 marks the tolerance 1e-9 + 1e-6 |b|
                p0_gap = p0_gap.max((a - b).abs() / (1e-9 + 1e-6 * b.abs()));
            }
            let res = recursion_residuals(&params, unit_lst(&hold), &got.q);
            residual = residual.max(res.into_iter().fold(0.0, f64::max));
            regen = regen.max(rel(regenerative_busy_period(&params, got.p0[0]), got.e_bp));
        }
    }
    let ok = errors.is_empty()
        && metric_gap <= 1e-6
        && p0_gap <= 1.0
        && residual <= 1e-10
        && regen <= 1e-6;
    (
        ok,
        json!({
            "max_rel_metric_gap": metric_gap,
            "max_scaled_p0_gap": p0_gap,
            "max_recursion_residual": residual,
            "max_regenerative_gap": regen,
            "errors": errors,
        }),
    )
}

/// The two parameter sets of the round-trip figure.
fn figure_channels() -> [(&'static str, ChannelModel); 2] {
    [
        (
            "linear",
            ChannelModel::linear(3.0, 1.0).expect("valid channel"),
        ),
        (
            "nonlinear",
            ChannelModel::nonlinear(3.0, 2.0, 1.0).expect("valid channel"),
        ),
    ]
}

const FIG_MU: f64 = 0.1;
const FIG_T: f64 = 3.0;

fn closed_form_defective_mass(ch: &ChannelModel) -> f64 {
    let p = ch.success_probability(FIG_T).expect("valid timeout");
    p * p
}

fn monte_carlo_distributions(cfg: &ValidationConfig) -> (bool, Value) {
    let mut ok = true;
    let mut out = serde_json::Map::new();
    for (i, (name, ch)) in figure_channels().into_iter().enumerate() {
        let grid = GridSpec::default();
        let (occ, def) = match (
            total_time_distribution(&ch, FIG_MU, FIG_T, SemanticsMode::Occupancy, grid),
            total_time_distribution(&ch, FIG_MU, FIG_T, SemanticsMode::Defective, grid),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                out.insert(name.into(), json!({ "error": e.to_string() }));
                ok = false;
                continue;
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
        let n = cfg.mc_samples;
        let mut holding = Vec::with_capacity(n);
        let mut trips = Vec::with_capacity(n);
        for _ in 0..n {
            let s = sample_transaction(&ch, FIG_MU, FIG_T, &mut rng);
            holding.push(s.holding);
            trips.push(s.round_trip.unwrap_or(f64::INFINITY));
        }
        let ks_occ = ks_distance(&occ, &holding).unwrap_or(f64::INFINITY);
        let ks_def = ks_distance(&def, &trips).unwrap_or(f64::INFINITY);
        let mass_gap = (def.total_mass() - closed_form_defective_mass(&ch)).abs();
        let mean = holding.iter().sum::<f64>() / n as f64;
        let sd = (holding.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd / (n as f64).sqrt();
        let z = (occ.moment(1) - mean).abs() / se;
        ok &= ks_occ <= 0.005 && ks_def <= 0.005 && mass_gap <= 1e-6 && z <= 3.0;
        out.insert(
            name.into(),
            json!({
                "ks_occupancy": ks_occ,
                "ks_defective": ks_def,
                "defective_mass_gap": mass_gap,
                "mean_holding_grid": occ.moment(1),
                "mean_holding_sample": mean,
                "mean_gap_in_se": z,
            }),
        );
    }
    (ok, Value::Object(out))
}

fn quadrature_agreement() -> (bool, Value) {
    let [(_, lin), (_, nl)] = figure_channels();
    let grid = GridSpec::default();
    let step = grid.step_for(FIG_T, FIG_MU);
    let y = oneway_com_dist(&lin, FIG_T, SemanticsMode::Defective, step)
        .and_then(|up| Ok((up, exponential_dist(FIG_MU, SERVICE_TAIL_EPS, step)?)))
        .and_then(|(up, ex)| convolve(&up, &ex));
    let d = total_time_distribution(&nl, FIG_MU, FIG_T, SemanticsMode::Defective, grid);
    let (y, d) = match (y, d) {
        (Ok(y), Ok(d)) => (y, d),
        (Err(e), _) | (_, Err(e)) => return (false, json!({ "error": e.to_string() })),
    };
    let mut lin_gap: f64 = 0.0;
    let mut nl_gap: f64 = 0.0;
    let mut errors = Vec::new();
    let span = 2.0 * FIG_T + 3.0 / FIG_MU;
    for i in 1..=100 {
        let t = 2.0 * FIG_T * i as f64 / 100.0;
        match fy_linear_oracle(t, &lin, FIG_MU, FIG_T) {
            Ok(v) => lin_gap = lin_gap.max((y.pdf(t) - v).abs()),
            Err(e) => errors.push(e.to_string()),
        }
        let t = span * i as f64 / 100.0;
        match f_nonlinear_oracle(t, &nl, FIG_MU, FIG_T) {
            Ok(v) => nl_gap = nl_gap.max((d.cdf(t) - v).abs()),
            Err(e) => errors.push(e.to_string()),
        }
    }
    (
        errors.is_empty() && lin_gap <= 1e-4 && nl_gap <= 1e-4,
        json!({ "linear_density_gap": lin_gap, "nonlinear_cdf_gap": nl_gap, "errors": errors }),
    )
}

/// Grid of the end-to-end comparison.
pub const END_TO_END_ALPHAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const END_TO_END_INV_LAMBDAS: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

fn end_to_end_base() -> (QueueParams, ChannelModel) {
    (
        QueueParams::new(10, 1.0, 0.5, 0.1, 3.0).expect("valid parameters"),
        ChannelModel::nonlinear(1.0, 1.0, 1.0).expect("valid channel"),
    )
}

/// Theory values `[alpha][inv_lambda]` of one metric.
type Table = Vec<Vec<f64>>;

fn violations(
    table: &Table,
    nonincreasing_in_inv_lambda: bool,
    nondecreasing_in_alpha: bool,
) -> Vec<String> {
    let slack = |a: f64, b: f64| 1e-9 * a.abs().max(b.abs());
    let mut v = Vec::new();
    for (ai, row) in table.iter().enumerate() {
        for j in 1..row.len() {
            if nonincreasing_in_inv_lambda && row[j] > row[j - 1] + slack(row[j], row[j - 1]) {
                v.push(format!(
                    "alpha={} inv_lambda {}->{}: {} -> {}",
                    END_TO_END_ALPHAS[ai],
                    END_TO_END_INV_LAMBDAS[j - 1],
                    END_TO_END_INV_LAMBDAS[j],
                    row[j - 1],
                    row[j]
                ));
            }
        }
    }
    if nondecreasing_in_alpha {
        let width = table.iter().map(Vec::len).min().unwrap_or(0);
        for j in 0..width {
            for ai in 1..table.len() {
                let (a, b) = (table[ai - 1][j], table[ai][j]);
                if b < a - slack(a, b) {
                    v.push(format!(
                        "inv_lambda={} alpha {}->{}: {} -> {}",
                        END_TO_END_INV_LAMBDAS[j],
                        END_TO_END_ALPHAS[ai - 1],
                        END_TO_END_ALPHAS[ai],
                        a,
                        b
                    ));
                }
            }
        }
    }
    v
}

fn theory_vs_simulation(cfg: &ValidationConfig) -> (bool, Value) {
    const METRICS: [&str; 5] = ["L", "W", "LS", "WS", "BP"];
    let (base, channel) = end_to_end_base();
    let mut covered = [0usize; 5];
    let mut points = 0usize;
    let mut tables: Vec<Table> = vec![Vec::new(); 5];
    let mut misses = Vec::new();
    let mut errors = Vec::new();
    for &alpha in &END_TO_END_ALPHAS {
        for t in tables.iter_mut() {
            t.push(Vec::new());
        }
        let ch = ChannelModel { alpha, ..channel };
        let dist = match total_time_distribution(
            &ch,
            base.mu,
            base.timeout,
            SemanticsMode::Occupancy,
            GridSpec::default(),
        ) {
            Ok(d) => d,
            Err(e) => {
                errors.push(e.to_string());
                continue;
            }
        };
        for &inv in &END_TO_END_INV_LAMBDAS {
            let params = QueueParams {
                lambda: 1.0 / inv,
                ..base
            };
            let theory = match performance_metrics(&params, &dist) {
                Ok(r) => r,
                Err(e) => {
                    errors.push(e.to_string());
                    continue;
                }
            };
            let values = [theory.l, theory.w, theory.ls, theory.ws, theory.e_bp];
            for (t, v) in tables.iter_mut().zip(values) {
                t.last_mut().expect("row pushed").push(v);
            }
            let sim = SimConfig {
                params,
                channel: ch,
                horizon: cfg.horizon,
                warmup: 0.1 * cfg.horizon,
                replications: cfg.replications,
                master_seed: cfg.seed,
            };
            let est = match run_experiment(&sim) {
                Ok(e) => e,
                Err(e) => {
                    errors.push(e.to_string());
                    continue;
                }
            };
            points += 1;
            for (i, (m, v)) in METRICS.iter().zip(values).enumerate() {
                let e = est.get(m).expect("simulator reports every metric");
                if e.covers(v) {
                    covered[i] += 1;
                } else {
                    misses.push(json!({
                        "alpha": alpha, "inv_lambda": inv, "metric": m, "theory": v,
                        "sim_mean": e.mean, "ci": [e.ci_low, e.ci_high], "observed_reps": e.n,
                    }));
                }
            }
        }
    }
    let fractions: Vec<f64> = covered
        .iter()
        .map(|c| *c as f64 / points.max(1) as f64)
        .collect();
    let coverage_ok = points == END_TO_END_ALPHAS.len() * END_TO_END_INV_LAMBDAS.len()
        && fractions.iter().all(|f| *f >= 0.9);
    let l_viol = violations(&tables[0], true, true);
    let w_viol = violations(&tables[1], true, true);
    let bp_viol = violations(&tables[4], true, false);
    let ok = errors.is_empty()
        && coverage_ok
        && l_viol.is_empty()
        && w_viol.is_empty()
        && bp_viol.is_empty();
    let coverage: serde_json::Map<String, Value> = METRICS
        .iter()
        .zip(&fractions)
        .map(|(m, f)| (m.to_string(), json!(f)))
        .collect();
    (
        ok,
        json!({
            "coverage": coverage,
            "monotonicity_violations": { "L": l_viol, "W": w_viol, "BP": bp_viol },
            "theory": { "L": tables[0], "W": tables[1], "BP": tables[4] },
            "misses": misses,
            "errors": errors,
        }),
    )
}

/// Median of the success-conditioned round-trip time.
pub fn conditioned_median(
    ch: &ChannelModel,
    mu: f64,
    timeout: f64,
) -> Result<f64, crate::timedist::DistError> {
    let d = total_time_distribution(
        ch,
        mu,
        timeout,
        SemanticsMode::Defective,
        GridSpec::default(),
    )?;
    Ok(d.renormalized().median())
}

fn median_ordering() -> (bool, Value) {
    let [(_, lin), (_, nl)] = figure_channels();
    let lin_same_noise = ChannelModel {
        noise_power: nl.noise_power,
        ..lin
    };
    let med = |ch: &ChannelModel| conditioned_median(ch, FIG_MU, FIG_T).unwrap_or(f64::NAN);
    let (m_lin, m_nl, m_lin2) = (med(&lin), med(&nl), med(&lin_same_noise));
    (
        m_lin < 0.99 * m_nl,
        json!({
            "median_linear": m_lin,
            "median_nonlinear": m_nl,
            "median_linear_same_noise": m_lin2,
        }),
    )
}

fn sweep_reproducibility(cfg: &ValidationConfig) -> (bool, Value) {
    let (base, channel) = end_to_end_base();
    let spec = SweepSpec {
        params: base,
        channel,
        semantics: HoldingSemantics::Occupancy,
        variable: SweepVariable::InvLambda,
        values: vec![1.0, 2.0, 3.0],
        series: Some(Series {
            variable: SweepVariable::Alpha,
            values: vec![0.5, 2.0],
        }),
        engines: Engines::Both,
        seed: cfg.seed,
        replications: 4,
        horizon: 2000.0,
        warmup: 200.0,
        grid: GridSpec { points: 1 << 13 },
    };
    let run = || run_sweep(&spec).map(|o| (to_csv(&o.rows), o.failures));
    match (run(), run()) {
        (Ok((a, fa)), Ok((b, _))) => (
            a == b && fa.is_empty(),
            json!({ "bytes": a.len(), "identical": a == b, "failures": fa }),
        ),
        (Err(e), _) | (_, Err(e)) => (false, json!({ "error": e.to_string() })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in Criterion::ALL {
            assert_eq!(Criterion::from_name(c.block()), Some(c));
            assert_eq!(
                Criterion::from_name(&format!("{c:?}").to_lowercase()),
                Some(c)
            );
        }
        assert_eq!(Criterion::from_name("nope"), None);
    }

    #[test]
    fn monotonicity_detector() {
        let t = vec![vec![3.0, 2.0, 2.0], vec![3.5, 2.5, 2.6]];
        let v = violations(&t, true, true);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("alpha=1"));
        let t = vec![vec![3.0, 2.0], vec![2.0, 1.0]];
        assert_eq!(violations(&t, true, true).len(), 2);
        assert!(violations(&t, true, false).is_empty());
    }
}
