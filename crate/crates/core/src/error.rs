use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the grid, geometry, flow and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("conformal factor must be positive, found {value:e} at index {index}")]
    NonPositive { index: usize, value: f64 },

    #[error(
        "flow degenerated at t = {t}: min u = {min_u:e} at index {index} fell to the floor {floor:e}"
    )]
    Degenerate {
        t: f64,
        min_u: f64,
        index: usize,
        floor: f64,
    },

    #[error("numerical instability at t = {t}: non-finite values appeared, reduce cfl_safety")]
    Unstable { t: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(
        "hypothesis (B) exponent too small: p0 = {p0} must satisfy p0 > n/2 + 2n(n+4)/((n-2)(n+2)) = {threshold}"
    )]
    ExponentTooSmall { p0: f64, threshold: f64 },

    #[error("amplitude bisection failed: {0}; try a different seed")]
    Bracket(String),

    #[error("sequence member {index} failed: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Process exit code: 1 validation, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::NonFinite { .. }
            | Error::GridMismatch(_)
            | Error::InvalidArgument(_)
            | Error::Config { .. }
            | Error::ExponentTooSmall { .. } => 1,
            Error::NonPositive { .. }
            | Error::Degenerate { .. }
            | Error::Unstable { .. }
            | Error::Bracket(_) => 2,
            Error::Member { source, .. } => source.exit_code(),
            Error::Io { .. } | Error::Format { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
