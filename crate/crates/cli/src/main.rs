//! `cdmodel` command-line front end.
//!
//! Exit status: 0 on success, 1 when a validation criterion or an engine
//! evaluation fails, 2 on a usage error.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod settings;

use commands::{DistArgs, SimulateArgs, SolveArgs, SweepArgs, ValidateArgs};
use settings::Settings;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Failure already reported to the user; only the exit status remains.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Failed(pub String);

#[derive(Debug, Parser)]
#[command(
    name = "cdmodel",
    version,
    about = "Retrial-queue model of database access over a fading channel"
)]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Round-trip time law as (t, pdf, cdf) rows, defective and conditioned on success.
    Dist(DistArgs),
    /// Analytic performance metrics as JSON.
    Solve(SolveArgs),
    /// Simulation estimates as JSON.
    Simulate(SimulateArgs),
    /// Parameter sweep as CSV.
    Sweep(SweepArgs),
    /// Acceptance battery as a JSON report.
    Validate(ValidateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Dist(a) => commands::dist(cli.settings, a),
        Command::Solve(a) => commands::solve(cli.settings, a),
        Command::Simulate(a) => commands::simulate(cli.settings, a),
        Command::Sweep(a) => commands::sweep(cli.settings, a),
        Command::Validate(a) => commands::validate(cli.settings, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
