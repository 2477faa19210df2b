use std::path::PathBuf;

use thiserror::Error;

use crate::asura::WellBalancedReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("matrix is not positive semidefinite: eigenvalue {min_eigenvalue:e} below -{tolerance:e}")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error(
        "barrier violation at iteration {iteration}: eigenvalues [{min_eig}, {max_eig}] not strictly inside ({lower}, {upper})"
    )]
    BarrierViolation {
        iteration: usize,
        lower: f64,
        upper: f64,
        min_eig: f64,
        max_eig: f64,
    },

    #[error("lemma `{lemma}` violated at iteration {iteration} (margin {margin:e})")]
    LemmaViolation {
        lemma: &'static str,
        iteration: usize,
        margin: f64,
    },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("iteration cap exceeded: {iterations} > {cap}")]
    IterationCapExceeded { iterations: usize, cap: usize },

    #[error("well-balanced event failed in all {} attempts", reports.len())]
    WellBalancedFailed { reports: Vec<WellBalancedReport> },

    #[error("insufficient trace: {0}")]
    InsufficientTrace(String),

    #[error("insufficient sample: need at least {required} runs, got {actual}")]
    InsufficientSample { required: usize, actual: usize },

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("invariant violated: {0}")]
    InvariantViolated(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
