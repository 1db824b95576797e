use thiserror::Error;

/// Errors raised by the estimation, solver and calibration stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed interval: lo = {lo} exceeds hi = {hi}")]
    MalformedInterval { lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("need at least {required} observations, found {found}")]
    TooFewObservations { required: usize, found: usize },

    #[error("no training observation has positive kernel weight at the query point")]
    EmptyNeighborhood,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver received no brackets with positive weight")]
    EmptyInput,

    #[error("instance has {endpoints} distinct endpoints; exhaustive search is limited to {limit}")]
    InstanceTooLarge { endpoints: usize, limit: usize },

    #[error("prediction rule is undefined at the nearest grid point {index}")]
    UndefinedAt { index: usize },

    #[error("no conformity scores to calibrate against")]
    EmptyScores,

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("covariate point {0:?} lies outside every partition cell")]
    OutsidePartition(Vec<f64>),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
