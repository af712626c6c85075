use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid opinion state: {0}")]
    InvalidState(String),

    #[error("node index {index} out of range for {n} agents")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("trajectory window too short: {recorded} recorded steps, need at least {needed}")]
    WindowTooShort { recorded: usize, needed: usize },

    #[error("trajectory is not densely recorded between t={from} and t={to}")]
    SparseRecording { from: usize, to: usize },

    #[error("topology changed at t={0} inside the analysis window")]
    TopologyChanged(usize),

    #[error("trajectory has not converged (termination: {0})")]
    NotConverged(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by malformed user input rather than a failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidState(_)
                | Error::IndexOutOfRange { .. }
                | Error::LengthMismatch { .. }
                | Error::InvalidConfig(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::WindowTooShort { .. }
                | Error::SparseRecording { .. }
        )
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }
}
