use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frequency set: {0}")]
    InvalidFrequencySet(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("clock stalled: only {edges} of {wanted} edges within {cycles} base cycles")]
    StalledClock {
        edges: usize,
        wanted: usize,
        cycles: usize,
    },
    #[error("arithmetic overflow computing {0}")]
    Overflow(&'static str),
    #[error("undefined correlation: constant input")]
    UndefinedCorrelation,
    #[error("bad magic bytes in trace file")]
    BadMagic,
    #[error("unsupported trace file version {0}")]
    UnsupportedVersion(u32),
    #[error("trace file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("malformed trace file: {0}")]
    Malformed(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
