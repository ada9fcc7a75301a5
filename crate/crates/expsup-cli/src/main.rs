//! `expsup` — solve optimal stopping problems for linear diffusions, verify
//! their expected-supremum representations and tabulate extremal laws.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Format, ProblemConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{op}: {err}")]
    Numeric { op: &'static str, err: expsup::error::Error },
    #[error("verification failed")]
    Verification,
}

impl CliError {
    pub fn numeric(op: &'static str, err: expsup::error::Error) -> Self {
        CliError::Numeric { op, err }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric { .. } => 3,
        }
    }

    fn record(&self) -> serde_json::Value {
        match self {
            CliError::Config(m) => serde_json::json!({ "error": "ConfigError", "message": m }),
            CliError::Io(m) => serde_json::json!({ "error": "IoError", "message": m }),
            CliError::Numeric { op, err } => serde_json::json!({ "error": err.kind(), "op": op, "message": err.to_string() }),
            CliError::Verification => serde_json::json!({ "error": "VerificationFailed" }),
        }
    }
}

#[derive(Parser)]
#[command(name = "expsup", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (file for emit-default-config); overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Simulation seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulation.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and tabulate V and the representation.
    Solve,
    /// Run the verification battery; exit 1 if any check fails.
    Verify,
    /// Tabulate sup/inf/joint laws of the running extremes.
    Laws,
    /// Print (or write with --out) the default configuration.
    EmitDefaultConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Command::EmitDefaultConfig = cli.command {
        let text = ProblemConfig::default().to_toml();
        return match cli.out {
            Some(p) => std::fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        };
    }
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ProblemConfig::load(&path)?;
    commands::seed_override(&mut cfg.simulation, cli.seed);
    let out = cli.out.unwrap_or_else(|| cfg.output.path.clone());
    let format = cli.format.unwrap_or(cfg.output.format);
    match cli.command {
        Command::Solve => commands::cmd_solve(&cfg, &out, format),
        Command::Verify => {
            if commands::cmd_verify(&cfg, &out, format)? {
                Ok(())
            } else {
                Err(CliError::Verification)
            }
        }
        Command::Laws => commands::cmd_laws(&cfg, &out, format),
        Command::EmitDefaultConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code())
        }
    }
}
