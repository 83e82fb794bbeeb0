use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("batch time index {found} does not follow model time {model}")]
    TimeOrder { model: usize, found: usize },

    #[error("batch contains unlabeled samples; use the Laplacian model for partially labeled data")]
    Unlabeled,

    #[error("regularized kernel system at step {step} is ill-conditioned (condition {condition:e})")]
    IllConditioned { step: usize, condition: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidInput(_) => "invalid_input",
            Error::Empty(_) => "empty",
            Error::TimeOrder { .. } => "time_order",
            Error::Unlabeled => "unlabeled",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::Schema(_) => "schema",
            Error::Version { .. } => "version",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}
