use thiserror::Error;

/// Errors raised by the model, estimators and generators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("reward entry {value} at ({state}, {action}) outside [0, {bound}]")]
    RewardOutOfRange {
        state: usize,
        action: usize,
        value: f64,
        bound: f64,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("reference policy has zero probability at ({state}, {action})")]
    ZeroReference { state: usize, action: usize },

    #[error("infinite KL: policy puts mass on ({state}, {action}) where the reference is zero")]
    InfiniteKl { state: usize, action: usize },

    #[error("beta must be positive and finite, got {0}")]
    InvalidBeta(f64),

    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),

    #[error("alpha must lie in (0.5, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),

    #[error("label must be -1 or +1, got {0}")]
    InvalidLabel(i64),

    #[error("function class is empty")]
    EmptyClass,

    #[error("sample size must be at least 1")]
    ZeroSamples,

    #[error("lambda must be positive, got {0}")]
    InvalidLambda(f64),

    #[error("lambda {lambda} exceeds Gamma_T^2 / 2 = {limit}")]
    LambdaTooLarge { lambda: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hard instance bias b = {b} outside (0, {half_bound})")]
    HardInstanceBias { b: f64, half_bound: f64 },

    #[error(
        "bonus calibration failed: no multiplier up to {max_multiplier} reaches coverage {target}"
    )]
    CalibrationFailed { max_multiplier: f64, target: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("serialization: {0}")]
    Serde(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
