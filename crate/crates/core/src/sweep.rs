//! Parameter sweeps producing theory and simulation rows in a fixed CSV
//! layout.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{performance_metrics, AnalyticError, PerformanceReport, QueueParams};
use crate::channel::{CapacityMode, ChannelError, ChannelModel};
use crate::simulator::{run_experiment, SimConfig, SimError, SimEstimates};
use crate::timedist::{holding_time_distribution, DistError, GridSpec, HoldingSemantics};

/// CSV header; column order is fixed.
pub const CSV_HEADER: &str =
    "case,K,inv_lambda,gamma,mu,T,alpha,B,N,semantics,engine,metric,value,ci_low,ci_high,seed";

/// Metrics emitted for each engine, in row order.
pub const SWEEP_METRICS: [&str; 7] = ["p1", "L", "W", "LS", "WS", "BP", "discard_rate"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("swept values must be nonempty and strictly increasing")]
    BadValues,
    #[error("{0} can only be swept on a nonlinear channel")]
    NeedsNonlinear(SweepVariable),
    #[error("series variable equals the swept variable")]
    DuplicateVariable,
}

#[derive(Debug, Error)]
enum PointError {
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "inv_lambda")]
    InvLambda,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "B")]
    Bandwidth,
    #[serde(rename = "N")]
    Noise,
}

impl std::fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepVariable::InvLambda => "inv_lambda",
            SweepVariable::Alpha => "alpha",
            SweepVariable::Bandwidth => "B",
            SweepVariable::Noise => "N",
        })
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inv_lambda" => Ok(SweepVariable::InvLambda),
            "alpha" => Ok(SweepVariable::Alpha),
            "B" => Ok(SweepVariable::Bandwidth),
            "N" => Ok(SweepVariable::Noise),
            other => Err(format!("unknown sweep variable {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engines {
    Theory,
    Sim,
    #[default]
    Both,
}

impl Engines {
    fn theory(self) -> bool {
        matches!(self, Engines::Theory | Engines::Both)
    }
    fn sim(self) -> bool {
        matches!(self, Engines::Sim | Engines::Both)
    }
}

/// Outer sweep variable; every value crosses every value of the inner one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub params: QueueParams,
    pub channel: ChannelModel,
    pub semantics: HoldingSemantics,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub series: Option<Series>,
    pub engines: Engines,
    pub seed: u64,
    pub replications: usize,
    pub horizon: f64,
    pub warmup: f64,
    pub grid: GridSpec,
}

/// One parameter combination of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub params: QueueParams,
    pub channel: ChannelModel,
}

fn strictly_increasing(v: &[f64]) -> bool {
    !v.is_empty() && v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

fn apply(point: &mut SweepPoint, var: SweepVariable, x: f64) {
    match var {
        SweepVariable::InvLambda => point.params.lambda = 1.0 / x,
        SweepVariable::Alpha => point.channel.alpha = x,
        SweepVariable::Bandwidth => point.channel.bandwidth = x,
        SweepVariable::Noise => point.channel.noise_power = x,
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if !strictly_increasing(&self.values) {
            return Err(SweepError::BadValues);
        }
        let mut vars = vec![self.variable];
        if let Some(s) = &self.series {
            if !strictly_increasing(&s.values) {
                return Err(SweepError::BadValues);
            }
            if s.variable == self.variable {
                return Err(SweepError::DuplicateVariable);
            }
            vars.push(s.variable);
        }
        if self.channel.mode == CapacityMode::Linear && vars.contains(&SweepVariable::Bandwidth) {
            return Err(SweepError::NeedsNonlinear(SweepVariable::Bandwidth));
        }
        Ok(())
    }

    /// Points in output order: series value outer, swept value inner.
    pub fn points(&self) -> Vec<SweepPoint> {
        let base = SweepPoint {
            params: self.params,
            channel: self.channel,
        };
        let outer: Vec<Option<f64>> = match &self.series {
            Some(s) => s.values.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::with_capacity(outer.len() * self.values.len());
        for o in outer {
            for &x in &self.values {
                let mut p = base;
                if let (Some(v), Some(s)) = (o, &self.series) {
                    apply(&mut p, s.variable, v);
                }
                apply(&mut p, self.variable, x);
                out.push(p);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub case: CapacityMode,
    #[serde(rename = "K")]
    pub k: usize,
    pub inv_lambda: f64,
    pub gamma: f64,
    pub mu: f64,
    #[serde(rename = "T")]
    pub timeout: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub bandwidth: f64,
    #[serde(rename = "N")]
    pub noise: f64,
    pub semantics: HoldingSemantics,
    pub engine: String,
    pub metric: String,
    pub value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Messages of engine evaluations that failed; each left an `error` row.
    pub failures: Vec<String>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Theory value of a sweep metric.
pub fn theory_metric(report: &PerformanceReport, success: f64, name: &str) -> f64 {
    match name {
        "p1" => report.p1,
        "L" => report.l,
        "W" => report.w,
        "LS" => report.ls,
        "WS" => report.ws,
        "BP" => report.e_bp,
        "discard_rate" => 1.0 - success * success,
        _ => f64::NAN,
    }
}

fn theory(spec: &SweepSpec, pt: &SweepPoint) -> Result<(PerformanceReport, f64), PointError> {
    let p = pt.params;
    let d = holding_time_distribution(&pt.channel, p.mu, p.timeout, spec.semantics, spec.grid)?;
    let report = performance_metrics(&p, &d)?;
    Ok((report, pt.channel.success_probability(p.timeout)?))
}

fn simulate(spec: &SweepSpec, pt: &SweepPoint) -> Result<SimEstimates, PointError> {
    let cfg = SimConfig {
        params: pt.params,
        channel: pt.channel,
        horizon: spec.horizon,
        warmup: spec.warmup,
        replications: spec.replications,
        master_seed: spec.seed,
    };
    Ok(run_experiment(&cfg)?)
}

fn point_rows(spec: &SweepSpec, pt: &SweepPoint) -> (Vec<SweepRow>, Vec<String>) {
    let row = |engine: &str, metric: &str| SweepRow {
        case: pt.channel.mode,
        k: pt.params.k,
        inv_lambda: 1.0 / pt.params.lambda,
        gamma: pt.params.gamma,
        mu: pt.params.mu,
        timeout: pt.params.timeout,
        alpha: pt.channel.alpha,
        bandwidth: pt.channel.bandwidth,
        noise: pt.channel.noise_power,
        semantics: spec.semantics,
        engine: engine.to_string(),
        metric: metric.to_string(),
        value: None,
        ci_low: None,
        ci_high: None,
        seed: None,
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    if spec.engines.theory() {
        match theory(spec, pt) {
            Ok((report, success)) => rows.extend(SWEEP_METRICS.iter().map(|m| SweepRow {
                value: finite(theory_metric(&report, success, m)),
                ..row("theory", m)
            })),
            Err(e) => {
                failures.push(format!(
                    "theory at inv_lambda={}: {e}",
                    1.0 / pt.params.lambda
                ));
                rows.push(row("theory", "error"));
            }
        }
    }
    if spec.engines.sim() {
        match simulate(spec, pt) {
            Ok(est) => rows.extend(SWEEP_METRICS.iter().map(|m| {
                let e = est.get(m).expect("simulator reports every sweep metric");
                SweepRow {
                    value: finite(e.mean),
                    ci_low: finite(e.ci_low),
                    ci_high: finite(e.ci_high),
                    seed: Some(spec.seed),
                    ..row("sim", m)
                }
            })),
            Err(e) => {
                failures.push(format!("sim at inv_lambda={}: {e}", 1.0 / pt.params.lambda));
                rows.push(SweepRow {
                    seed: Some(spec.seed),
                    ..row("sim", "error")
                });
            }
        }
    }
    (rows, failures)
}

/// Runs every point (in parallel) and returns rows in spec order.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput, SweepError> {
    spec.validate()?;
    let per_point: Vec<(Vec<SweepRow>, Vec<String>)> = spec
        .points()
        .par_iter()
        .map(|pt| point_rows(spec, pt))
        .collect();
    let (mut rows, mut failures) = (Vec::new(), Vec::new());
    for (r, f) in per_point {
        rows.extend(r);
        failures.extend(f);
    }
    Ok(SweepOutput { rows, failures })
}

fn opt<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV text with [`CSV_HEADER`]; missing values are empty fields.
pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.case,
            r.k,
            r.inv_lambda,
            r.gamma,
            r.mu,
            r.timeout,
            r.alpha,
            r.bandwidth,
            r.noise,
            r.semantics,
            r.engine,
            r.metric,
            opt(r.value),
            opt(r.ci_low),
            opt(r.ci_high),
            opt(r.seed),
        );
    }
    out
}
