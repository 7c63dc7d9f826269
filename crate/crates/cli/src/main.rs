use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lattice_gibbs::LatticeError;

mod commands;
mod config;

use config::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(e: LatticeError) -> Self {
        CliError::Config(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lattice(e) if e.is_runtime_limit() => 3,
            _ => 2,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Lattice(e) => e.name(),
            CliError::Io(_) => "IoError",
        }
    }
}

/// Lattice Gaussian sampling, exact convergence diagnostics and MIMO detection experiments.
#[derive(Debug, Parser)]
#[command(name = "lattice-gibbs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one sampler and write one coefficient vector per line.
    Sample(Overrides),
    /// Spectral radii, TV decay curves and mixing times on a finite box.
    Diagnose(Overrides),
    /// BER-versus-iterations experiment.
    Mimo(Overrides),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LATTICE_GIBBS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("LATTICE_GIBBS_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| match &cli.command {
        Command::Sample(o) => commands::sample(o),
        Command::Diagnose(o) => commands::diagnose(o),
        Command::Mimo(o) => commands::mimo(o),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(e.exit_code())
        }
    }
}
