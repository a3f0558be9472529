//! Failure type shared by every backend adapter contract.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("empty input")]
    EmptyInput,
    #[error("no entry for {0}")]
    NotFound(String),
    #[error("cassette has no recorded response for {0}")]
    CassetteMiss(String),
    #[error("adapter backend failed: {0}")]
    Backend(String),
    #[error("adapter contract violated: {0}")]
    Contract(String),
}
