use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("matrix is not positive definite: pivot {index} has value {value:e}")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error("kernel argument {0} lies outside [-1, 1] beyond rounding tolerance")]
    KernelDomain(f64),

    #[error("hyperparameter search failed: every evaluation failed to factorize (last error: {0})")]
    TuningFailed(String),

    #[error("iteration {iteration}: only {count} inliers remain, at least 3 are required")]
    TooFewInliers { iteration: usize, count: usize },

    #[error("no proposals were accepted after burn-in; try a wider prior or a different initial value")]
    NoAcceptedProposals,

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown {what} `{tag}` (available: {available})")]
    UnknownTag {
        what: &'static str,
        tag: String,
        available: String,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("artifact: {0}")]
    Artifact(String),

    #[error("artifact schema version {found} is not supported (this build reads major version {supported})")]
    UnsupportedVersion { found: String, supported: u32 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::KernelDomain(_)
            | Error::TuningFailed(_)
            | Error::TooFewInliers { .. }
            | Error::NoAcceptedProposals => ErrorKind::Numerical,
            Error::UnknownTag { .. } | Error::Config { .. } => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}
