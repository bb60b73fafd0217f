use thiserror::Error;

/// Errors produced by the coreset library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("brute-force oracle limited to {cap} distinct points, got {got}")]
    OracleCapExceeded { cap: usize, got: usize },

    #[error("every Meyerson guess overflowed; horizon or aspect bound is mis-set")]
    AllGuessesOverflowed,

    #[error("time {t} out of range (current time {now})")]
    TimeOutOfRange { t: u64, now: u64 },

    #[error("window {window} out of range (max {max})")]
    WindowOutOfRange { window: u64, max: u64 },

    #[error("sliding window horizon exceeded: no empty block level")]
    HorizonExceeded,

    #[error("stream length {len} exceeds budget {budget}")]
    LengthBudgetExceeded { len: u128, budget: u128 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported snapshot version {0}")]
    SnapshotVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
