use thiserror::Error;

/// Errors raised by the estimators, the risk computations and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sample size must be at least 1")]
    InvalidSampleSize,

    #[error("invalid spectral profile: {0}")]
    InvalidProfile(String),

    #[error("source condition incompatible with the eigendecay: r' = {r_prime} <= 0")]
    IncompatibleSource { r_prime: f64 },

    #[error("evaluation norm of the target diverges: 2r' + lambda(1 - beta') = {exponent} <= 1")]
    NonSummableTarget { exponent: f64 },

    #[error("truncation N = {truncation} is too coarse: tail bound {bound:e} exceeds {limit:e}")]
    TruncationTooCoarse { truncation: usize, bound: f64, limit: f64 },

    #[error("index range [{lo}, {hi}] is not inside [1, {truncation}]")]
    InvalidIndexRange { lo: usize, hi: usize, truncation: usize },

    #[error("linear system is singular: relative residual {residual:e}")]
    SingularSystem { residual: f64 },

    #[error("constraint matrix is rank deficient (numerical rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("spectrum is not trace class: 2p + lambda*beta = {exponent} <= 1")]
    NotTraceClass { exponent: f64 },

    #[error("log-log fit requires strictly positive data")]
    NonPositiveData,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigendecomposition did not converge")]
    Decomposition,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
