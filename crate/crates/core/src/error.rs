use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} outside horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("paths have mismatched horizons ({0} vs {1})")]
    HorizonMismatch(f64, f64),

    #[error("grids do not match")]
    GridMismatch,

    #[error("infeasible regime: {0}")]
    Regime(String),

    #[error("covariance matrix not positive semidefinite (pivot {pivot:e} at index {index})")]
    NotPositiveSemidefinite { index: usize, pivot: f64 },

    #[error("circulant embedding has negative eigenvalue {min_eigenvalue:e} at size {size}")]
    EmbeddingFailed { size: usize, min_eigenvalue: f64 },

    #[error("sample is empty")]
    EmptySample,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
