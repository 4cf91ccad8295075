use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no observations")]
    EmptyData,

    #[error("row {row}: level {level} of factor {factor} is outside 1..={levels}")]
    LevelOutOfRange {
        row: usize,
        factor: usize,
        level: usize,
        levels: usize,
    },

    #[error("row {row}: expected {expected} factor levels, found {found}")]
    FactorCount {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: weight must be a positive integer")]
    InvalidWeight { row: usize },

    #[error("row {row}: response is not finite")]
    NonFiniteResponse { row: usize },

    #[error("invalid precisions: {0}")]
    InvalidPrecisions(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("factor {factor} has no observed levels")]
    DegenerateFactor { factor: usize },

    #[error("sum of squares of factor {factor} is zero; precision conditional is improper")]
    DegeneratePrecision { factor: usize },

    #[error("residual sum of squares is zero; conditional of the global precision is improper")]
    DegenerateResidual,

    #[error("factor {factor} needs at least 2 levels for a proper precision conditional")]
    TooFewLevels { factor: usize },

    #[error("sampler state became non-finite at iteration {iteration}")]
    NonFiniteState { iteration: usize },

    #[error("design is not balanced levels")]
    NotBalancedLevels,

    #[error("operation requires exactly two factors, got {0}")]
    UnsupportedFactorCount(usize),

    #[error(
        "power iteration did not converge after {iterations} iterations \
         (last estimate {estimate}, last change {residual:e})"
    )]
    NonConvergence {
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("series: {0}")]
    Series(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
