use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, mismatched dimensions or inconsistent inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A time argument outside the closed interval a schedule is defined on.
    #[error("time {t} outside schedule range [0, {total}]")]
    Domain { t: f64, total: f64 },

    /// A precondition on numerical input (e.g. hermiticity) does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The integrator lost trace or unitarity beyond tolerance.
    #[error("integration failure: {0}")]
    Integration(String),

    /// A requested object is too large for the dense representation.
    #[error("resource guard: {0}")]
    Resource(String),

    /// The dual-state purification denominator fell to or below the floor.
    #[error("estimator degenerate: denominator {denominator:e} <= floor {floor:e}")]
    Degenerate { denominator: f64, floor: f64 },

    #[error("no minimum: {0}")]
    NoMinimum(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain { .. } | Error::Contract(_) | Error::Resource(_) => 2,
            Error::Format { .. } => 2,
            Error::Integration(_) => 3,
            Error::Degenerate { .. } | Error::NoMinimum(_) => 4,
            Error::Verification(_) => 5,
            Error::Io { .. } => 1,
        }
    }
}
