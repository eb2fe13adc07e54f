use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("correlation {0} outside [0, 1)")]
    InvalidCorrelation(f64),

    #[error("support too large for least squares: |M| = {support}, n = {n}")]
    SupportTooLarge { support: usize, n: usize },

    #[error("degenerate fit: residual scale collapsed below {0:e}")]
    DegenerateFit(f64),

    #[error("degenerate moment estimate: m2 = {0}")]
    DegenerateMoment(f64),

    #[error("no thresholded observations at lambda = {0}")]
    NoThresholdedObservations(f64),

    #[error("could not bracket the quantile fixed point for p = {0}")]
    QuantileBracket(usize),

    #[error("no lambda on the grid had converged fits in every fold")]
    NoValidLambda,

    #[error("no cells found in {0}")]
    NoCells(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("thread pool error: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T> = std::result::Result<T, Error>;
