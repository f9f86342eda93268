//! Command-line workbench around the simulator core: dataset generation,
//! per-base-station model training, rate/accuracy evaluation, experiment
//! axis sweeps and ablation studies.
//!
//! Every command is also callable as a library function, which is how the
//! integration tests drive the pipeline without spawning processes.

pub mod ablate;
pub mod artifacts;
pub mod config;
pub mod evaluate;
pub mod generate;
pub mod sweep;
pub mod train;

use clap::{Parser, Subcommand};
use thiserror::Error;

/// Coordinated mmWave beamforming workbench: ray-traced pilot datasets,
/// beam prediction models and effective-rate accounting.
#[derive(Debug, Parser)]
#[command(name = "cbf", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/holdout pilot datasets for a scenario.
    Generate(generate::GenerateArgs),
    /// Train one beam predictor per base station on a generated dataset.
    Train(train::TrainArgs),
    /// Evaluate trained predictors: beam accuracy, rates and overheads.
    Evaluate(evaluate::EvaluateArgs),
    /// Run generate/train/evaluate across one experiment axis.
    Sweep(sweep::SweepArgs),
    /// Run an ablation study (normalisation, synchronisation, adaptability).
    Ablate(ablate::AblateArgs),
}

/// Command-level failures, each mapped to a stable process exit code:
/// configuration 2, data 3, numeric 4, io 5.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl From<cbf_core::geometry::SceneError> for CliError {
    fn from(e: cbf_core::geometry::SceneError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<cbf_core::channel::ChannelError> for CliError {
    fn from(e: cbf_core::channel::ChannelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<cbf_core::beamforming::BeamformingError> for CliError {
    fn from(e: cbf_core::beamforming::BeamformingError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<cbf_core::dataset::DatasetError> for CliError {
    fn from(e: cbf_core::dataset::DatasetError) -> Self {
        match e {
            cbf_core::dataset::DatasetError::Io(io) => CliError::Io(io),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<cbf_core::learning::LearningError> for CliError {
    fn from(e: cbf_core::learning::LearningError) -> Self {
        match e {
            cbf_core::learning::LearningError::Diverged { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<cbf_core::mlp::ModelIoError> for CliError {
    fn from(e: cbf_core::mlp::ModelIoError) -> Self {
        match e {
            cbf_core::mlp::ModelIoError::Io(io) => CliError::Io(io),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io(io),
            other => CliError::Data(format!("csv: {other:?}")),
        }
    }
}

/// Parses arguments, runs the selected command and returns the process
/// exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(args) => generate::run(&args),
        Command::Train(args) => train::run(&args),
        Command::Evaluate(args) => evaluate::run(&args),
        Command::Sweep(args) => sweep::run(&args),
        Command::Ablate(args) => ablate::run(&args),
    }
}
