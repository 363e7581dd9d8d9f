use thiserror::Error;

/// Errors shared across the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("covariance is not usable: {0}")]
    BadCovariance(String),
    #[error("covariance condition number {0:.3e} exceeds 1e12")]
    NearSingularCovariance(f64),
    #[error("search did not converge within {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint value {value} outside limits [{lo}, {hi}] for joint {joint}")]
    JointLimit {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("shape fit diverged: objective increased for {0} consecutive iterations")]
    FitDiverged(usize),
    #[error("no belief state covers keyframe time {0}")]
    MissingBelief(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
