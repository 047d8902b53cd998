//! `bochner-forge`: batch front end for constructing and verifying matrix Bochner pairs.

mod commands;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use bochner_core::BochnerError;
use clap::{Parser, ValueEnum};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    VerifyPoint,
    BuildFamily,
    ScanFamily,
    Deform,
    Darboux,
    Recurrence,
    Adcheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(name = "bochner-forge", version, about = "Construct and verify 2x2 hypergeometric matrix Bochner pairs")]
pub struct Cli {
    /// Command to run.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Command to run, as a flag.
    #[arg(long = "command", value_enum)]
    pub command_flag: Option<Command>,
    /// Input JSON: a file path or an inline JSON document.
    #[arg(long)]
    pub input: Option<String>,
    /// Quadrature nodes per Gauss-Jacobi rule.
    #[arg(long, default_value_t = 200)]
    pub m: usize,
    /// Number of polynomial degrees.
    #[arg(long = "N", default_value_t = 20)]
    pub n: usize,
    /// Factor applied to every default certificate tolerance.
    #[arg(long = "tol-cert", default_value_t = 1.0)]
    pub tol_cert: f64,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; `BOCHNER_THREADS` takes precedence.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical breakdown: {0}")]
    Numerical(#[from] BochnerError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 4,
        }
    }
}

/// Outcome of a command: the report is always written, `passed` selects exit 0 or 3.
pub struct Outcome {
    pub json: serde_json::Value,
    pub csv: Option<Vec<Vec<String>>>,
    pub passed: bool,
}

fn thread_count(cli: &Cli) -> Result<Option<usize>, CliError> {
    match std::env::var("BOCHNER_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("BOCHNER_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => match cli.threads {
            Some(0) => Err(CliError::Config("--threads must be positive".into())),
            t => Ok(t),
        },
    }
}

fn validate(cli: &Cli) -> Result<Command, CliError> {
    let command = match (cli.command, cli.command_flag) {
        (Some(a), Some(b)) if a != b => return Err(CliError::Config("conflicting commands".into())),
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(CliError::Config("no command given".into())),
    };
    if !(cli.tol_cert > 0.0) || !cli.tol_cert.is_finite() {
        return Err(CliError::Config("--tol-cert must be positive".into()));
    }
    if cli.m < 32 {
        return Err(CliError::Config("--m must be at least 32".into()));
    }
    if cli.n < 2 {
        return Err(CliError::Config("--N must be at least 2".into()));
    }
    Ok(command)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let command = validate(cli)?;
    if let Some(t) = thread_count(cli)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let outcome = commands::dispatch(command, cli)?;
    output::write(cli, command, &outcome)?;
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("bochner-forge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
