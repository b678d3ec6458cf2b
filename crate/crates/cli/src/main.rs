//! `qrdesign`: batch front end for the design solvers.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 when a solver
//! or an output write fails.

mod config;
mod presets;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qrdesign::DesignError;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "qrdesign", version, about = "Robust designs for quantile regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a JSON configuration file.
    Run {
        config: PathBuf,
        /// Override a configuration entry, e.g. `--set nu=0.25` or
        /// `--set ga.population_size=60`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List variance presets, knot presets, basis kinds and tasks.
    Presets,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("solver error: {0}")]
    Solver(#[from] DesignError),
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Solver(_) | CliError::Io(_) => 3,
        }
    }
}

/// Caps the global pool at `QRDESIGN_THREADS` when it is set.
fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("QRDESIGN_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| CliError::Config {
        field: "QRDESIGN_THREADS".into(),
        reason: format!("expected a positive integer, got `{raw}`"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config { field: "QRDESIGN_THREADS".into(), reason: e.to_string() })
}

fn run(path: &PathBuf, overrides: &[String]) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config { field: "config".into(), reason: format!("{}: {e}", path.display()) })?;
    let root = serde_json::from_str(&text)
        .map_err(|e| CliError::Config { field: "config".into(), reason: format!("{}: {e}", path.display()) })?;
    let cfg = config::parse(root, overrides)?;
    init_threads()?;
    let outcome = tasks::run(&cfg)?;
    let mut line = format!("task={} total={}", cfg.task.name(), outcome.total);
    for (k, v) in &outcome.extra {
        line.push_str(&format!(" {k}={v}"));
    }
    line.push_str(&format!(" output={}", cfg.output.display()));
    Ok(line)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            print!("{}", presets::listing());
            ExitCode::SUCCESS
        }
        Command::Run { config, overrides } => match run(&config, &overrides) {
            Ok(line) => {
                println!("{line}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("qrdesign: {e}");
                ExitCode::from(e.exit_code())
            }
        },
    }
}
