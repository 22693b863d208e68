use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A signal channel has zero variance over the fitting samples.
    #[error("signal dimension {dim} has zero variance; widen the initial excitation")]
    DegenerateSignal { dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient history: need {needed} samples, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Innovation covariance lost positive definiteness, or the filter diverged.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("state trajectory is stale: reconstructed {age} steps ago, interval is {interval}")]
    StaleTrajectory { age: usize, interval: usize },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input pool: {0}")]
    InvalidPool(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("parse error in {path:?}: {msg}")]
    Parse { path: Option<PathBuf>, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse { path: None, msg: msg.into() }
    }
}
