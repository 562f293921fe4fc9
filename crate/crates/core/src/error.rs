use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("family budget exceeded: {needed} families > limit {limit}")]
    Capacity { needed: usize, limit: usize },

    #[error("grid mismatch: period 2^{log2_period} is not a multiple of the orbit step 2^-{step}")]
    GridMismatch { log2_period: i64, step: u64 },

    #[error("set is unbounded; measure and enumeration need a bounded window")]
    Unbounded,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("construction budget exceeded: {reason}; estimate: {estimate}")]
    Budget { reason: String, estimate: String },

    #[error("oracle cap exceeded: need k up to {needed}, cap {cap}")]
    OracleCap { needed: String, cap: String },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("schema version mismatch: file has {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
