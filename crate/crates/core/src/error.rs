use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("token budget exceeded: need {needed} columns, have {available}")]
    TokenBudget { needed: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value produced in block {block}")]
    NumericOverflow { block: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("slot allocation conflict: {0}")]
    Allocation(String),

    #[error("projection is not unique at this point")]
    NonUniqueProjection,

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("point outside the support of every bump")]
    OutsideSupport,

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("sweep point {value}: {source}")]
    SweepPoint { value: f64, source: Box<Error> },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// The underlying error of a sweep failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::SweepPoint { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
