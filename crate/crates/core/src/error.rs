use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("lag {lag} out of range 1..={d}")]
    LagOutOfRange { lag: usize, d: usize },
    #[error("rescaled time u = {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("model is unstable: companion spectral radius {radius:.6} at u = {u:.4}")]
    Unstable { radius: f64, u: f64 },
    #[error("innovation covariance must be symmetric positive definite")]
    SigmaNotPositiveDefinite,
    #[error("ground-truth graph requires a diagonal innovation covariance")]
    NonDiagonalSigma,
    #[error("matrix is numerically singular (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("dense dimension {dim} exceeds limit {limit}")]
    TooLarge { dim: usize, limit: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("AR polynomial is singular at u = {u}, omega = {omega}")]
    SingularPolynomial { u: f64, omega: f64 },
    #[error("solver did not converge after {iterations} iterations (KKT residual {kkt:e})")]
    NonConvergence { iterations: usize, kkt: f64 },
    #[error("degenerate cross-validation folds: {0}")]
    DegenerateFolds(String),
    #[error("empty fit set")]
    EmptyFitSet,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
