//! Command-line front end for the damlab experiments.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{CommandOutput, Options};
use crate::config::Scenario;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "damlab", version, about = "Dissipative adiabatic measurement experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the seed in the scenario file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for CSV and SVG output.
    #[arg(long, global = true, default_value = "damlab-out")]
    pub out: PathBuf,

    /// Print a JSON summary instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    /// Size of the worker thread pool.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Steady state, gap and pseudoinverse diagnostics.
    Steady,
    /// Exact, perturbative and ideal pointer distributions.
    DamDistribution,
    /// Error scaling over a sweep of N, T or theta.
    Scaling,
    /// Non-adiabatic correction as a function of T.
    Nonadiabaticity,
    /// Quantum Fisher information and the output-state bound.
    QfiBound,
    /// Run the full acceptance suite.
    Verify,
}

fn dispatch(cli: &Cli) -> CliResult<CommandOutput> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config <file> is required"))?;
    let scenario = Scenario::load(path, cli.seed)?;
    let opts = Options { out: cli.out.clone() };
    match cli.command {
        Command::Steady => commands::steady(&scenario, &opts),
        Command::DamDistribution => commands::dam_distribution(&scenario, &opts),
        Command::Scaling => commands::scaling(&scenario, &opts),
        Command::Nonadiabaticity => commands::nonadiabatic(&scenario, &opts),
        Command::QfiBound => commands::qfi_bound(&scenario, &opts),
        Command::Verify => commands::verify(&scenario, &opts),
    }
}

/// Runs the command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = match cli.workers {
        Some(0) => Err(CliError::config("--workers must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => Err(CliError::config(format!("thread pool: {e}"))),
        },
        None => dispatch(cli),
    };
    match result {
        Ok(output) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&output.json).unwrap_or_default());
            } else {
                for line in &output.lines {
                    println!("{line}");
                }
            }
            match output.failure {
                Some(msg) => {
                    eprintln!("error: {msg}");
                    CliError::Acceptance(msg).exit_code()
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
