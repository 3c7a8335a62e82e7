use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for {len} spins")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid spin value {0}, spins must be +1 or -1")]
    InvalidSpin(i64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid coloring: {0}")]
    InvalidColoring(String),

    #[error("annealing schedule is empty")]
    EmptySchedule,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration over {n} spins exceeds the cap of {cap}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("elimination order has induced width {width}, cap is {cap}")]
    WidthExceeded { width: usize, cap: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("beta {beta} lies outside the reference grid [{lo}, {hi}]")]
    Extrapolation { beta: f64, lo: f64, hi: f64 },

    #[error("reference statistics carry no log Z")]
    LogZUnavailable,

    #[error("edge mismatch: {0}")]
    EdgeMismatch(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("budget too small: {0}")]
    BudgetTooSmall(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
