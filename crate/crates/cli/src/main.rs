//! `igann`: train, evaluate and inspect generalized-potential solvers.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure.

mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<igann::Error> for CliError {
    fn from(e: igann::Error) -> Self {
        use igann::Error as E;
        match e {
            E::NonFiniteLoss { .. }
            | E::NonFiniteWalker { .. }
            | E::SingularSystem { .. }
            | E::LinearAlgebra(_)
            | E::UndefinedMetric(_) => CliError::Numerical(e.to_string()),
            E::Io(io) => CliError::Io(io),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "igann", version, about = "Generalized potentials of stationary Fokker-Planck equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write a run directory.
    Train(commands::TrainArgs),
    /// Compare a trained run against its reference potential.
    Evaluate(commands::EvaluateArgs),
    /// Finite-difference steady state (1D or 2D).
    Fdm(commands::FdmArgs),
    /// Dense spectrum of the 1D finite-difference operator.
    Eigen(commands::EigenArgs),
    /// Draw training batches (Latin hypercube or SDE walkers).
    Sample(commands::SampleArgs),
    /// Table of rRMSE / rMAE over evaluated runs.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Fdm(a) => commands::fdm(a),
        Command::Eigen(a) => commands::eigen(a),
        Command::Sample(a) => commands::sample(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
