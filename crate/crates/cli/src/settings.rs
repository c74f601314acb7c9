//! Flags shared by every subcommand, optionally loaded from a JSON file whose
//! keys mirror the long flag names (dashes become underscores).

use std::path::{Path, PathBuf};

use cdmodel::analytic::QueueParams;
use cdmodel::channel::{CapacityMode, ChannelModel};
use cdmodel::timedist::{GridSpec, HoldingSemantics};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Linear,
    Nonlinear,
}

impl From<Case> for CapacityMode {
    fn from(c: Case) -> Self {
        match c {
            Case::Linear => CapacityMode::Linear,
            Case::Nonlinear => CapacityMode::Nonlinear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Semantics {
    Occupancy,
    DefectiveRenormalized,
}

impl From<Semantics> for HoldingSemantics {
    fn from(s: Semantics) -> Self {
        match s {
            Semantics::Occupancy => HoldingSemantics::Occupancy,
            Semantics::DefectiveRenormalized => HoldingSemantics::DefectiveRenormalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// JSON file with default values for any flag; flags win.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Capacity law of the channel.
    #[arg(long, value_enum, global = true)]
    pub case: Option<Case>,
    /// Number of clients.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Transaction rate of a free client.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Retrial rate of an orbiting client.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Database service rate.
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    /// Transmission timeout.
    #[arg(long, global = true)]
    pub timeout: Option<f64>,
    /// Fading parameter; larger means a worse channel.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub bandwidth: Option<f64>,
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    /// Holding-time law fed to the analytic engine.
    #[arg(long, value_enum, global = true)]
    pub semantics: Option<Semantics>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Simulation replications.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Simulated time per replication.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Discarded initial time; defaults to a tenth of the horizon.
    #[arg(long, global = true)]
    pub warmup: Option<f64>,
    /// Grid points of the distribution engine.
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Settings {
    /// Fills unset flags from `file`.
    pub fn overlay(mut self, file: Settings) -> Self {
        overlay!(self, file; case, k, lambda, gamma, mu, timeout, alpha, bandwidth, noise,
            semantics, seed, reps, horizon, warmup, grid_points, out, format);
        self
    }

    pub fn case(&self) -> Case {
        self.case.unwrap_or(Case::Nonlinear)
    }

    pub fn mu(&self) -> f64 {
        self.mu.unwrap_or(0.1)
    }

    pub fn timeout(&self) -> f64 {
        self.timeout.unwrap_or(3.0)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn reps(&self) -> usize {
        self.reps.unwrap_or(30)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(1e5)
    }

    pub fn warmup(&self) -> f64 {
        self.warmup.unwrap_or(0.1 * self.horizon())
    }

    pub fn semantics(&self) -> HoldingSemantics {
        self.semantics.map(Into::into).unwrap_or_default()
    }

    pub fn grid(&self) -> GridSpec {
        self.grid_points
            .map(|points| GridSpec { points })
            .unwrap_or_default()
    }

    pub fn params(&self) -> Result<QueueParams, UsageError> {
        QueueParams::new(
            self.k.unwrap_or(10),
            self.lambda.unwrap_or(1.0),
            self.gamma.unwrap_or(0.5),
            self.mu(),
            self.timeout(),
        )
        .map_err(|e| UsageError(e.to_string()))
    }

    pub fn channel(&self) -> Result<ChannelModel, UsageError> {
        ChannelModel::new(
            self.case().into(),
            self.alpha.unwrap_or(1.0),
            self.noise.unwrap_or(1.0),
            self.bandwidth.unwrap_or(1.0),
        )
        .map_err(|e| UsageError(e.to_string()))
    }

    pub fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

/// Reads the config file into the shared settings and into a subcommand's own
/// options. Keys unknown to both are rejected.
pub fn load_config<T: DeserializeOwned>(
    path: &Path,
    own_keys: &[&str],
) -> anyhow::Result<(Settings, T)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("config {} is not valid JSON: {e}", path.display())))?;
    let serde_json::Value::Object(map) = value else {
        return Err(UsageError(format!("config {} must be a JSON object", path.display())).into());
    };
    let (own, shared): (serde_json::Map<_, _>, serde_json::Map<_, _>) = map
        .into_iter()
        .partition(|(k, _)| own_keys.contains(&k.as_str()));
    let settings = serde_json::from_value(shared.into())
        .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
    let own = serde_json::from_value(own.into())
        .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
    Ok((settings, own))
}
