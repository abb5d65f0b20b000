use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument is outside its documented domain.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// A dataset-level precondition failed (empty input, mixed domain sizes, ...).
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// Vector arguments that must agree in length do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A private estimator was asked for more than the data supports,
    /// e.g. a quantile rank beyond the number of users.
    #[error("not enough users: need {need}, have {have}")]
    NotEnoughUsers { need: usize, have: usize },

    /// A debiasing hypothesis does not hold for the supplied rates.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// The per-trial budget ledger disagrees with the declared split.
    #[error("budget ledger mismatch: {0}")]
    BudgetMismatch(String),

    /// A record in an input file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }
}
