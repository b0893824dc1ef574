use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A shell window, stencil or index range that cannot support the request.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not defined for the requested input.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Invalid model or run configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The integration produced non-finite or runaway amplitudes.
    #[error("blow-up at t = {t}: max |u| = {max_abs:e}")]
    BlowUp {
        t: f64,
        max_abs: f64,
        /// Amplitudes (re, im) at the offending step.
        frame: Vec<(f64, f64)>,
    },

    /// Power iteration ran out of iterations.
    #[error("no convergence after {iterations} iterations (last estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    /// Bad magic bytes, unknown version or truncated binary file.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
