//! Command line, file formats and drivers for `soslyap-core`.

pub use soslyap_core as core;

pub mod backend;
pub mod config;
pub mod files;
pub mod run;

use soslyap_core::loi::Status;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] soslyap_core::Error),
}

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Success = 0,
    Infeasible = 1,
    Failure = 2,
    ConfigError = 3,
}

impl From<Status> for ExitStatus {
    fn from(s: Status) -> Self {
        match s {
            Status::Feasible => ExitStatus::Success,
            Status::Infeasible => ExitStatus::Infeasible,
            Status::NumericalFailure => ExitStatus::Failure,
        }
    }
}

impl CliError {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Config(_) | CliError::Core(soslyap_core::Error::Invalid(_)) => ExitStatus::ConfigError,
            _ => ExitStatus::Failure,
        }
    }
}
