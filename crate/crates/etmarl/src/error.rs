//! Error taxonomy shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// `Config` covers bad user-supplied configuration (names, dimensions,
/// file formats). `Contract` covers API misuse that a caller can avoid
/// (out-of-order steps, querying before an event). `Numeric` flags
/// non-finite values detected mid-computation, with enough context to
/// locate the offending step.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric diagnostic: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
