//! Command-line entry point for the truncated-Gaussian energy models:
//! config-driven training, evaluation, sampling, and synthetic data
//! generation, with JSONL metrics and binary checkpoints.

mod commands;
mod config;
mod metrics;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use trug_core::TrugError;

/// Failures are split by exit code: configuration problems (2) versus
/// numerical failures during a run (3).
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<TrugError> for CliError {
    fn from(e: TrugError) -> Self {
        match e {
            TrugError::NonFiniteGradient(_) | TrugError::SamplerOverrun(_) => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "trug",
    about = "Train, evaluate and sample truncated-Gaussian energy models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured model, writing checkpoints and metrics into
    /// the run directory.
    Train {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the configured dataset's held-out part.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Override the configured seed (AIS randomness).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw fantasy samples (rbm) or generated sequences (trbm) from a
    /// checkpoint into a packed-bitmap container plus a text render.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output container path; a .txt render is written alongside.
        #[arg(long)]
        output: PathBuf,
        /// Number of samples (rbm) or sequences (trbm).
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Gibbs sweeps per sample (rbm) or per generated frame (trbm).
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Frames per generated sequence (trbm).
        #[arg(long, default_value_t = 30)]
        frames: usize,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic dataset file from the configured generator.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Output container path.
        #[arg(long)]
        output: PathBuf,
    },
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Train {
            config,
            epochs,
            seed,
            output_dir,
        } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(e) = epochs {
                config.epochs = e;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(dir) = output_dir {
                config.output_dir = dir;
            }
            commands::train(&config)
        }
        Command::Eval {
            config,
            checkpoint,
            seed,
        } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            commands::eval(&config, &checkpoint)
        }
        Command::Sample {
            config,
            checkpoint,
            output,
            count,
            steps,
            frames,
            seed,
        } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            commands::sample(&config, &checkpoint, &output, count, steps, frames)
        }
        Command::GenData { config, output } => {
            let config = RunConfig::load(&config)?;
            commands::gen_data(&config, &output)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Numerical(_) => ExitCode::from(3),
            }
        }
    }
}
