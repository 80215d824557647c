//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two objects that must share a grid or shape do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A sample is too degenerate to process (ties, constant values, empty shells).
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    /// An operation was called in a state where its inputs are not yet available.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Linear algebra failed for conditioning reasons (non-SPD solve, singular system).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An inner optimizer diverged or could not reach its tolerance.
    #[error("optimization failure: {0}")]
    Optimization(String),

    /// Model selection had no admissible candidate.
    #[error("selection failure: {0}")]
    Selection(String),

    /// A configuration file or flag is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Input data files are malformed or mutually inconsistent.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::InvalidInput(_)
            | Error::GridMismatch(_)
            | Error::Degenerate(_)
            | Error::InvalidState(_)
            | Error::Data(_)
            | Error::Io(_) => 3,
            Error::Numerical(_) | Error::Optimization(_) | Error::Selection(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
