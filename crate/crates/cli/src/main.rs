//! `rtmpc`: batch front end for resilient tube MPC experiments.
//!
//! Exit codes: 0 on success (a controller fault is a result, not a failure),
//! 2 for configuration errors, 3 when terminal-ingredient synthesis fails,
//! 1 for I/O and anything else.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rtmpc::sim::SimError;
use thiserror::Error;

use crate::config::KindName;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Synthesis(_) => 3,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(_) | SimError::Attack(_) => CliError::Config(e.to_string()),
            SimError::Synthesis(t) => CliError::Synthesis(t.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "rtmpc", version, about = "Resilient tube MPC under probabilistic false-data-injection attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Over-threshold probabilities, the run-probability table and the buffer length.
    BufferLength(Common),
    /// Terminal ingredients: gain, terminal cost, tube, terminal set.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        controller: Option<KindName>,
    },
    /// One closed-loop run: trace.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        controller: Option<KindName>,
    },
    /// Seeded Monte Carlo campaign: runs.csv and aggregate.json.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        /// First seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        controller: Option<KindName>,
    },
    /// Monte Carlo aggregate per parameter value and controller: sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Controllers to compare; repeat or separate with commas.
        #[arg(long, value_enum, value_delimiter = ',')]
        controller: Vec<KindName>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SweepParam {
    /// Attack amplitude standard deviation.
    Sigma,
    /// Attack trigger probability.
    Abar,
    /// Disturbance bound, applied to every state.
    Wbar,
    /// Attack threshold.
    Ath,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
