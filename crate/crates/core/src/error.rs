//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A file does not follow its documented format.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    /// Two inputs that must agree do not.
    #[error("inconsistent data: {0}")]
    Consistency(String),

    /// Underlying I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Iterative solver hit its cap; carries the best estimate so far.
    #[error("no convergence within {iterations} iterations (best estimate {best_estimate})")]
    NonConvergence { iterations: usize, best_estimate: f64 },

    /// Training objective became non-finite.
    #[error("training diverged at iteration {iteration}: loss is not finite")]
    Divergence { iteration: usize },

    /// Bad configuration (CLI flags, config files, experiment setup).
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Wrap an I/O error with its path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Format { .. } | Error::Consistency(_) | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
