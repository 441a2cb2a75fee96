use thiserror::Error;

/// Errors raised by the channel pipeline, problem assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("covariance of link (ap {ap}, user {user}) is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsdCovariance {
        ap: usize,
        user: usize,
        min_eigenvalue: f64,
    },

    #[error("interference block C[{user}][{other}] is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsdBlock {
        user: usize,
        other: usize,
        min_eigenvalue: f64,
    },

    #[error("pilot observation matrix of link (ap {ap}, user {user}) is singular")]
    SingularEstimator { ap: usize, user: usize },

    #[error("precoder regularization matrix at ap {ap} is singular")]
    SingularPrecoder { ap: usize },

    #[error("at least 2 Monte-Carlo realizations are required, got {0}")]
    TooFewRealizations(usize),

    #[error("index {index} out of range for {what} (count {count})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        count: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("SINR denominator for user {user} is {value:e}; statistics are inconsistent")]
    InconsistentStatistics { user: usize, value: f64 },

    #[error("relative saving is undefined: reference allocation consumes no power")]
    UndefinedSaving,

    #[error("grid search over {dimension} coordinates rejected (limit {limit})")]
    GridTooLarge { dimension: usize, limit: usize },

    #[error("closed form requires a single AP and a single user, got K = {users}, L = {aps}")]
    NotSingleLink { users: usize, aps: usize },

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
