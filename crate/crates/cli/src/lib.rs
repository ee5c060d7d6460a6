//! Command implementations behind the `eit-size` binary.

pub mod commands;
pub mod config;
pub mod records;

use eit_size::EitError;

pub use commands::{cmd_freq, cmd_lines, cmd_report, cmd_solve, cmd_sweep, LineScenario, Report};
pub use config::ExperimentConfig;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl From<EitError> for CliError {
    fn from(e: EitError) -> Self {
        match e {
            EitError::NotPositiveDefinite { .. }
            | EitError::SolverFailure { .. }
            | EitError::PowerMismatch { .. }
            | EitError::SweepAborted { .. }
            | EitError::Degenerate(_) => CliError::Solver(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
