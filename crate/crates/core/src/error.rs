use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the restoration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel of length {kernel} does not fit a signal of length {signal}")]
    KernelTooLong { kernel: usize, signal: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("structure matrix is singular (smallest singular value {smallest:e}, largest {largest:e})")]
    SingularStructure { smallest: f64, largest: f64 },

    #[error(
        "derivative second-moment matrix is rank deficient: eigenvalue {index} is {value:e}; \
         the derivatives are not well distributed, use a positive Frobenius weight (lambda_F > 0)"
    )]
    RankDeficient { index: usize, value: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("restored signal equals the original exactly; ISNR is infinite")]
    InfiniteIsnr,

    #[error("all {0} lambda candidates failed")]
    AllCandidatesFailed(usize),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
