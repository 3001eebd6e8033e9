//! `ergodic`: reproducible experiments for the Perron, Floquet and
//! Hamilton-Jacobi eigenvalue problems.
//!
//! Exit codes: 0 success, 2 configuration, 3 numerics, 4 geometry, 5 CFL.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ergodic_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use ergodic_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Validation(_)) => 2,
            CliError::Core(E::Cfl { .. }) => 5,
            CliError::Core(E::Geometry(_) | E::LeftSimplex { .. }) => 4,
            CliError::Core(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ergodic",
    version,
    about = "Perron, Floquet and HJB eigenvalue experiments"
)]
struct Cli {
    /// JSON experiment configuration (defaults to the reference setup).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Format of tabular outputs; summaries are always JSON.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sampled Perron curve and its maximizer.
    Perron(commands::PerronArgs),
    /// Floquet eigenvalue of a periodic perturbation and its derivatives.
    Floquet(commands::FloquetArgs),
    /// Eigenvector curve, ergodic sets, local charts and attractiveness probe.
    Geometry(commands::GeometryArgs),
    /// Time-dependent and discounted HJB solves.
    Hjb(commands::HjbArgs),
    /// Hypotheses H1 to H5 and the monotonicity probe.
    Hypotheses(commands::HypothesesArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = cli.out {
        cfg.outputs.dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.numerics.seed = seed;
    }
    if let Some(format) = cli.format {
        cfg.outputs.format = format;
    }
    match cli.command {
        Command::Perron(args) => commands::perron(&cfg, &args),
        Command::Floquet(args) => commands::floquet(&cfg, &args),
        Command::Geometry(args) => commands::geometry(&mut cfg, &args),
        Command::Hjb(args) => commands::hjb(&mut cfg, &args),
        Command::Hypotheses(args) => commands::hypotheses(&cfg, &args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
