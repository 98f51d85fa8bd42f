use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("bracketing failed: {0}")]
    Bracketing(String),

    #[error("combinatorial budget exceeded: {required} supports required, limit {limit}")]
    Budget { required: u128, limit: u128 },

    #[error("columns are not normalized to squared norm n (column {index} has squared norm {found})")]
    NotNormalized { index: usize, found: f64 },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("all candidate fits failed: {0}")]
    AllFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error families, used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Budget { .. } | Error::Json(_) => ErrorClass::Config,
            Error::Dimension(_)
            | Error::NonFinite(_)
            | Error::ZeroColumn { .. }
            | Error::NotNormalized { .. }
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Io(_) => ErrorClass::Data,
            Error::NotPositiveDefinite { .. }
            | Error::NonConvergence { .. }
            | Error::Bracketing(_)
            | Error::AllFailed(_) => ErrorClass::Numerical,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::ZeroColumn { .. } => "zero_column",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Bracketing(_) => "bracketing",
            Error::Budget { .. } => "budget",
            Error::NotNormalized { .. } => "not_normalized",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::AllFailed(_) => "all_failed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
