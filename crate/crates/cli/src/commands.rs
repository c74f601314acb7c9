use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use cdmodel::analytic::performance_metrics;
use cdmodel::oracle::{ctmc_metrics, CtmcSpec};
use cdmodel::simulator::{run_replications, SimConfig, SimEstimates, METRICS};
use cdmodel::sweep::{run_sweep, to_csv, Engines, Series, SweepSpec, SweepVariable};
use cdmodel::timedist::{holding_time_distribution, total_time_distribution, SemanticsMode};
use cdmodel::validation::{
    run_criterion, Criterion, ValidationConfig, ValidationReport, REPORT_SCHEMA,
};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::settings::{load_config, Format, Settings};
use crate::{Failed, UsageError};

type Result<T> = anyhow::Result<T>;

trait OwnArgs: DeserializeOwned + Default {
    const KEYS: &'static [&'static str];
    fn overlay(self, file: Self) -> Self;
}

fn resolve<T: OwnArgs>(settings: Settings, own: T) -> Result<(Settings, T)> {
    match settings.config.clone() {
        Some(path) => {
            let (file_settings, file_own) = load_config::<T>(&path, T::KEYS)?;
            Ok((settings.overlay(file_settings), own.overlay(file_own)))
        }
        None => Ok((settings, own)),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_only(settings: &Settings, command: &str) -> Result<()> {
    match settings.format_or(Format::Json) {
        Format::Json => Ok(()),
        Format::Csv => Err(UsageError(format!("{command} writes JSON only")).into()),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn csv_number(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistArgs {
    /// Right end of the time grid; defaults to 2T + 3/mu.
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Number of grid times per curve.
    #[arg(long)]
    pub points: Option<usize>,
}

impl OwnArgs for DistArgs {
    const KEYS: &'static [&'static str] = &["tmax", "points"];
    fn overlay(self, file: Self) -> Self {
        Self {
            tmax: self.tmax.or(file.tmax),
            points: self.points.or(file.points),
        }
    }
}

#[derive(Debug, Serialize)]
struct DistRow {
    t: f64,
    pdf: f64,
    cdf: f64,
    semantics: &'static str,
}

pub fn dist(settings: Settings, args: DistArgs) -> Result<()> {
    let (settings, args) = resolve(settings, args)?;
    let (mu, timeout) = (settings.mu(), settings.timeout());
    let channel = settings.channel()?;
    if !(mu > 0.0 && mu.is_finite() && timeout > 0.0 && timeout.is_finite()) {
        return Err(UsageError("mu and timeout must be positive and finite".into()).into());
    }
    let tmax = args.tmax.unwrap_or(2.0 * timeout + 3.0 / mu);
    if !(tmax > 0.0 && tmax.is_finite()) {
        return Err(UsageError(format!("--tmax must be positive and finite, got {tmax}")).into());
    }
    let points = args.points.unwrap_or(600);
    if points == 0 {
        return Err(UsageError("--points must be at least 1".into()).into());
    }
    let defective = total_time_distribution(
        &channel,
        mu,
        timeout,
        SemanticsMode::Defective,
        settings.grid(),
    )?;
    if defective.total_mass() <= 0.0 {
        return Err(Failed("success probability underflows; no conditioned curve".into()).into());
    }
    let conditioned = defective.renormalized();
    let mut rows = Vec::with_capacity(2 * points);
    for (label, d) in [("defective", &defective), ("conditioned", &conditioned)] {
        for i in 1..=points {
            let t = tmax * i as f64 / points as f64;
            rows.push(DistRow {
                t,
                pdf: d.pdf(t),
                cdf: d.cdf(t),
                semantics: label,
            });
        }
    }
    let text = match settings.format_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = String::from("t,pdf,cdf,semantics\n");
            for r in &rows {
                writeln!(s, "{},{},{},{}", r.t, r.pdf, r.cdf, r.semantics)?;
            }
            s
        }
    };
    emit(settings.out.as_deref(), &text)
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveArgs {
    /// Solve the Markov chain with exponential holding time of rate mu instead.
    #[arg(long)]
    pub oracle_exponential: bool,
}

impl OwnArgs for SolveArgs {
    const KEYS: &'static [&'static str] = &["oracle_exponential"];
    fn overlay(self, file: Self) -> Self {
        Self {
            oracle_exponential: self.oracle_exponential || file.oracle_exponential,
        }
    }
}

pub fn solve(settings: Settings, args: SolveArgs) -> Result<()> {
    let (settings, args) = resolve(settings, args)?;
    json_only(&settings, "solve")?;
    let p = settings.params()?;
    let report = if args.oracle_exponential {
        ctmc_metrics(&CtmcSpec {
            k: p.k,
            lambda: p.lambda,
            gamma: p.gamma,
            nu: p.mu,
        })?
    } else {
        let channel = settings.channel()?;
        let d = holding_time_distribution(
            &channel,
            p.mu,
            p.timeout,
            settings.semantics(),
            settings.grid(),
        )?;
        performance_metrics(&p, &d)?
    };
    emit(settings.out.as_deref(), &to_json(&report)?)
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Also write per-replication values as CSV (rep, metric, value).
    #[arg(long)]
    pub per_rep: Option<PathBuf>,
}

impl OwnArgs for SimulateArgs {
    const KEYS: &'static [&'static str] = &["per_rep"];
    fn overlay(self, file: Self) -> Self {
        Self {
            per_rep: self.per_rep.or(file.per_rep),
        }
    }
}

fn sim_config(settings: &Settings) -> Result<SimConfig> {
    let cfg = SimConfig {
        params: settings.params()?,
        channel: settings.channel()?,
        horizon: settings.horizon(),
        warmup: settings.warmup(),
        replications: settings.reps(),
        master_seed: settings.seed(),
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

pub fn simulate(settings: Settings, args: SimulateArgs) -> Result<()> {
    let (settings, args) = resolve(settings, args)?;
    json_only(&settings, "simulate")?;
    let cfg = sim_config(&settings)?;
    let raws = run_replications(&cfg)?;
    if let Some(path) = &args.per_rep {
        let mut s = String::from("rep,metric,value\n");
        for r in &raws {
            for m in METRICS {
                writeln!(s, "{},{},{}", r.rep, m, csv_number(r.metric(m)))?;
            }
        }
        std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    }
    let est = SimEstimates::from_raw(&cfg, &raws);
    emit(settings.out.as_deref(), &to_json(&est)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    Theory,
    Sim,
    Both,
}

impl From<EngineChoice> for Engines {
    fn from(e: EngineChoice) -> Self {
        match e {
            EngineChoice::Theory => Engines::Theory,
            EngineChoice::Sim => Engines::Sim,
            EngineChoice::Both => Engines::Both,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepArgs {
    /// Swept variable: inv_lambda, alpha, B or N.
    #[arg(long)]
    pub vary: Option<SweepVariable>,
    /// Strictly increasing values of the swept variable, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Option<Vec<f64>>,
    /// Optional outer variable; each of its values repeats the whole sweep.
    #[arg(long)]
    pub series: Option<SweepVariable>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub series_values: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub engines: Option<EngineChoice>,
}

impl OwnArgs for SweepArgs {
    const KEYS: &'static [&'static str] = &["vary", "values", "series", "series_values", "engines"];
    fn overlay(self, file: Self) -> Self {
        Self {
            vary: self.vary.or(file.vary),
            values: self.values.or(file.values),
            series: self.series.or(file.series),
            series_values: self.series_values.or(file.series_values),
            engines: self.engines.or(file.engines),
        }
    }
}

pub fn sweep(settings: Settings, args: SweepArgs) -> Result<()> {
    let (settings, args) = resolve(settings, args)?;
    let values = args
        .values
        .ok_or_else(|| UsageError("--values is required".into()))?;
    let series = match (args.series, args.series_values) {
        (Some(variable), Some(values)) => Some(Series { variable, values }),
        (None, None) => None,
        _ => return Err(UsageError("--series and --series-values go together".into()).into()),
    };
    let sim = sim_config(&settings)?;
    let spec = SweepSpec {
        params: sim.params,
        channel: sim.channel,
        semantics: settings.semantics(),
        variable: args.vary.unwrap_or(SweepVariable::InvLambda),
        values,
        series,
        engines: args.engines.map(Into::into).unwrap_or_default(),
        seed: sim.master_seed,
        replications: sim.replications,
        horizon: sim.horizon,
        warmup: sim.warmup,
        grid: settings.grid(),
    };
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let out = run_sweep(&spec)?;
    let text = match settings.format_or(Format::Csv) {
        Format::Csv => to_csv(&out.rows),
        Format::Json => to_json(&out.rows)?,
    };
    emit(settings.out.as_deref(), &text)?;
    if out.failures.is_empty() {
        Ok(())
    } else {
        for f in &out.failures {
            eprintln!("engine failure: {f}");
        }
        Err(Failed(format!("{} engine evaluations failed", out.failures.len())).into())
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateArgs {
    /// Criteria to run, by id (A2) or block name (ctmc); all when absent.
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<String>>,
    /// Monte Carlo sample size of the distribution checks.
    #[arg(long)]
    pub mc_samples: Option<usize>,
}

impl OwnArgs for ValidateArgs {
    const KEYS: &'static [&'static str] = &["only", "mc_samples"];
    fn overlay(self, file: Self) -> Self {
        Self {
            only: self.only.or(file.only),
            mc_samples: self.mc_samples.or(file.mc_samples),
        }
    }
}

pub fn validate(settings: Settings, args: ValidateArgs) -> Result<()> {
    let (settings, args) = resolve(settings, args)?;
    json_only(&settings, "validate")?;
    let criteria = match &args.only {
        None => Criterion::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| {
                Criterion::from_name(n)
                    .ok_or_else(|| UsageError(format!("unknown criterion {n:?}")))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?,
    };
    let base = ValidationConfig::default();
    let cfg = ValidationConfig {
        seed: settings.seed.unwrap_or(base.seed),
        replications: settings.reps.unwrap_or(base.replications),
        horizon: settings.horizon.unwrap_or(base.horizon),
        mc_samples: args.mc_samples.unwrap_or(base.mc_samples),
        ..base
    };
    if cfg.replications < 2 || cfg.mc_samples < 2 || !(cfg.horizon > 0.0 && cfg.horizon.is_finite())
    {
        return Err(UsageError(
            "validation needs at least 2 replications and samples and a positive horizon".into(),
        )
        .into());
    }
    let mut reports = Vec::with_capacity(criteria.len());
    for c in criteria {
        let r = run_criterion(c, &cfg);
        eprintln!(
            "{:?} {} [{}] {:.2}s",
            r.id,
            if r.passed { "PASS" } else { "FAIL" },
            r.block,
            r.seconds
        );
        reports.push(r);
    }
    let report = ValidationReport {
        schema: REPORT_SCHEMA,
        passed: reports.iter().all(|r| r.passed),
        criteria: reports,
    };
    emit(settings.out.as_deref(), &to_json(&report)?)?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<String> = report
            .criteria
            .iter()
            .filter(|r| !r.passed)
            .map(|r| format!("{:?}", r.id))
            .collect();
        Err(Failed(format!("failed criteria: {}", failed.join(", "))).into())
    }
}
