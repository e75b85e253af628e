use thiserror::Error;

/// Errors raised by calibrators, bounds and data ingestion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset too small: need at least {need} samples, got {got}")]
    TooSmall { need: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible level: no θ in [{lo}, {hi}] satisfies the constraint at α = {alpha}")]
    InfeasibleLevel { lo: f64, hi: f64, alpha: f64 },

    #[error("no safe solution: loss at θ = 1 is {value} for sample {index}")]
    NoSafeSolution { index: usize, value: f64 },

    #[error("crossing condition fails: 1/(n+1) = {lhs} is not below slope·r = {rhs}")]
    CrossingCondition { lhs: f64, rhs: f64 },

    #[error("rank deficient design (minimum eigenvalue {min_eigenvalue:e})")]
    RankDeficient { min_eigenvalue: f64 },

    #[error("bound requires λ > 0")]
    RequiresPositiveLambda,

    #[error(
        "sample size too small for conservative shift: (μ+λ)(n+1) = {scale} must exceed 2·E[ρ] = {twice_rho}"
    )]
    ConservativeShift { scale: f64, twice_rho: f64 },

    #[error("level exhausted: α − β̂ = {0} is not positive")]
    LevelExhausted(f64),

    #[error("leave-one-out refit at index {index} failed: {source}")]
    LooFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("too many failed bootstrap replicates: {skipped} of {total}")]
    TooManySkipped { skipped: usize, total: usize },

    #[error("loss does not provide {0}")]
    MissingCapability(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
