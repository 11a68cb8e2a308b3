//! Experiment driver: input parsing, run manifests, subcommands and the
//! acceptance suite.

pub mod acceptance;
pub mod args;
pub mod commands;
pub mod inputs;
pub mod manifest;
pub mod parallel;

use spinlab_core::SpinError;

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("infeasible model: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Infeasible(_) => exit::INFEASIBLE,
            CliError::Runtime(_) => exit::FAILURE,
        }
    }
}

impl From<SpinError> for CliError {
    fn from(e: SpinError) -> Self {
        let msg = e.to_string();
        if e.is_infeasible() {
            return CliError::Infeasible(msg);
        }
        match e {
            SpinError::Parse(_) | SpinError::Invalid(_) | SpinError::Domain { .. } | SpinError::Consistency(_) => {
                CliError::Usage(msg)
            }
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
