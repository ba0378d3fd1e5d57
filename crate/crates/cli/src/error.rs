//! Driver errors and their exit-code mapping.
//!
//! Config errors name the offending key so a bad file can be fixed without
//! reading source; they exit with code 2 before anything is written. Runtime
//! errors exit with code 3 after the manifest has recorded the failure and
//! flagged whatever artifacts the run managed to produce.

use std::fmt;

use thiserror::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// The config is missing, malformed, out of range, or references a file
    /// that does not hold what it should. `key` is the offending field.
    #[error("config error: {key}: {reason}")]
    Config { key: String, reason: String },
    /// The run itself failed after validation passed.
    #[error("runtime error: {reason}")]
    Runtime { reason: String },
}

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl fmt::Display) -> Self {
        CliError::Config {
            key: key.into(),
            reason: reason.to_string(),
        }
    }

    pub fn runtime(reason: impl fmt::Display) -> Self {
        CliError::Runtime {
            reason: reason.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Runtime { .. } => EXIT_RUNTIME,
        }
    }
}

impl From<hiret_core::Error> for CliError {
    fn from(e: hiret_core::Error) -> Self {
        CliError::runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
