use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite after {attempts} jitter escalations")]
    NotPositiveDefinite { attempts: u32 },

    #[error("eigen-solver did not converge ({0})")]
    ConvergenceFailure(String),

    #[error("rank {rank} out of range 1..={max}")]
    InvalidRank { rank: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("ground truth has zero Frobenius norm")]
    ZeroTruth,

    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: expected {expected} bytes, found {actual}")]
    LengthMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported dataset format_version {0}")]
    UnsupportedVersion(u32),

    #[error("schema error in column `{column}`: {detail}")]
    Schema { column: String, detail: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::ConvergenceFailure(_)
            | Error::NumericalOverflow(_) => 3,
            Error::InvalidConfig(_) => 1,
            _ => 2,
        }
    }

    /// True for failures that come from the numerics rather than the data or the caller.
    pub fn is_numerical(&self) -> bool {
        self.exit_code() == 3
    }
}
