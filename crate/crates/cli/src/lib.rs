//! Batch front end for the `heatkernel` library: config loading, the
//! subcommands behind the `heatkernel` binary, and the acceptance suite run
//! by `verify`.

pub mod commands;
pub mod config;
pub mod engine;
pub mod output;
pub mod verify;

use std::fmt;

/// Failures, split by exit status: configuration problems exit with 2,
/// numerical failures and failed checks with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(heatkernel::Error),
    Io(String),
    /// A check ran and did not pass.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Failed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<heatkernel::Error> for CliError {
    fn from(e: heatkernel::Error) -> Self {
        match e {
            heatkernel::Error::Config(m) => CliError::Config(m),
            other => CliError::Numeric(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
