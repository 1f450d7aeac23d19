//! The `attncond` command line: `theory`, `train`, `plan` and `report`.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 I/O failure, 4 numerical
//! failure (non-convergence, divergence, failed grid runs).

pub mod output;
pub mod plan;
pub mod report;
pub mod svg;
pub mod theory;
pub mod train;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use output::RunManifest;

/// Flags accepted by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Root seed; overrides the seed in any config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print a machine-readable summary to standard output.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Parser)]
#[command(name = "attncond", version, about = "Conditioning experiments for multi-head attention")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo condition numbers of concatenated Gaussian head blocks.
    Theory(theory::TheoryArgs),
    /// Train a toy transformer (or a depth × heads grid) and probe its conditioning.
    Train(train::TrainArgs),
    /// Parameter breakdown or depth/heads trade-off table for an architecture.
    Plan(plan::PlanArgs),
    /// Summarize a training run directory, optionally with SVG charts.
    Report(report::ReportArgs),
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Theory(a) => theory::run(a, &cli.common),
        Command::Train(a) => train::run(a, &cli.common),
        Command::Plan(a) => plan::run(a, &cli.common),
        Command::Report(a) => report::run(a, &cli.common),
    }
}

/// JSON printed to standard output when a command fails numerically.
pub fn diagnostic(err: &Error) -> serde_json::Value {
    let mut v = serde_json::json!({
        "error": err.to_string(),
        "exit_code": err.exit_code(),
    });
    match err {
        Error::Diverged { step, last_good_step } => {
            v["kind"] = "diverged".into();
            v["step"] = (*step).into();
            v["last_good_step"] = serde_json::to_value(last_good_step).unwrap_or_default();
        }
        Error::NonFiniteGradient { block, step } => {
            v["kind"] = "non_finite_gradient".into();
            v["block"] = block.as_str().into();
            v["step"] = (*step).into();
        }
        Error::NoConvergence { sweeps } => {
            v["kind"] = "no_convergence".into();
            v["sweeps"] = (*sweeps).into();
        }
        Error::GridFailures(runs) => {
            v["kind"] = "grid_failures".into();
            v["runs"] = runs.clone().into();
        }
        _ => {}
    }
    v
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_numerical() {
                println!("{}", diagnostic(&err));
            }
            err.exit_code()
        }
    }
}
