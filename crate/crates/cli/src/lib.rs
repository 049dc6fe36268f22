//! Library side of the `muxclock` command: configuration, the five
//! subcommands and their report files.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

pub use config::ExperimentConfig;

/// Error carrying the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration: exit 2.
    Usage(String),
    /// Unreadable or corrupt input, or a failed write: exit 3.
    Data(String),
    /// Anything else: exit 4.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<muxclock_core::Error> for CliError {
    fn from(e: muxclock_core::Error) -> Self {
        use muxclock_core::Error as E;
        match e {
            E::InvalidFrequencySet(_) | E::InvalidArgument(_) | E::Empty(_) => {
                CliError::Usage(e.to_string())
            }
            E::BadMagic | E::UnsupportedVersion(_) | E::Truncated(_) | E::Malformed(_) | E::Io(_) => {
                CliError::Data(e.to_string())
            }
            E::StalledClock { .. } | E::Overflow(_) | E::UndefinedCorrelation => {
                CliError::Internal(e.to_string())
            }
        }
    }
}
