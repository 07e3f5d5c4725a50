use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unstable configuration: P(service + vacation < T) = {probability}")]
    Unstable { probability: f64 },

    #[error("no convergence after {iterations} sweeps (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("exponential service and vacation rates must differ (both {0})")]
    EqualRates(f64),

    #[error("characteristic roots are repeated (|gamma1 - gamma2| = {0:e})")]
    RepeatedRoots(f64),

    #[error("tail series needs more than {limit} terms to reach the truncation bound")]
    TruncationLimit { limit: usize },

    #[error("closed-form density is negative ({value:e} at x = {x})")]
    NegativeDensity { x: f64, value: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
