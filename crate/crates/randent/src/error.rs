//! Error taxonomy shared by all modules, with a fixed mapping to process
//! exit codes for the CLI (0 ok, 2 usage, 3 capacity, 4 numeric).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments outside the operation's domain (bad index, odd n, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input fails a validation contract, e.g. a matrix that is not unitary
    /// within tolerance.
    #[error("validation error: {0}")]
    Validation(String),

    /// Requested size exceeds a hard capacity bound.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Operation requires a Clifford gate or the Haar U(4) ensemble.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Iterative eigensolver failed to reach the residual tolerance.
    #[error("convergence error: {message} (best residual {best_residual:.3e})")]
    Convergence { message: String, best_residual: f64 },

    /// A structural assumption about the result is violated, e.g. a chain
    /// whose unit eigenvalue multiplicity is not exactly two.
    #[error("structural error: {0}")]
    Structural(String),

    /// Too few usable data points for a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Nonlinear fit failed.
    #[error("fit error: {0}")]
    Fit(String),

    /// CLI usage problems: bad flags, bad config, malformed input files.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Validation(_)
            | Error::Unsupported(_)
            | Error::InsufficientData(_)
            | Error::Usage(_)
            | Error::Io(_) => 2,
            Error::Capacity(_) => 3,
            Error::Convergence { .. } | Error::Structural(_) | Error::Fit(_) => 4,
        }
    }
}
