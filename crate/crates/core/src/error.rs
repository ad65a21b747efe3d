//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A referenced input file or directory could not be read.
    #[error("ingestion failed for {path}: {reason}")]
    Ingestion { path: String, reason: String },

    /// A line-oriented input (JSONL manifest, index snapshot) failed to parse.
    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    /// Inputs violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two values cannot be compared (for example signatures with different
    /// permutation counts or seeds).
    #[error("not comparable: {0}")]
    Comparability(String),

    /// A document is too short for the requested operation.
    #[error("document {doc_id} too short: {reason}")]
    TooShort { doc_id: String, reason: String },

    /// A token id is outside the backend's vocabulary.
    #[error("token id {token} out of vocabulary (vocab size {vocab_size})")]
    OutOfVocabulary { token: u32, vocab_size: u32 },

    /// A sequence exceeds the backend's context window; the caller must stride.
    #[error("sequence of {len} tokens exceeds context window {window}")]
    WindowExceeded { len: usize, window: usize },

    /// An HTTP request failed after exhausting its retry budget.
    #[error("transport error after {attempts} attempt(s): {reason}")]
    Transport {
        reason: String,
        attempts: u32,
        retryable: bool,
    },

    /// The remote server replied with a well-formed but contract-violating body.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Authentication with the remote API was rejected.
    #[error("credential error: {0}")]
    Credential(String),

    /// A numeric input is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative fit stopped without converging.
    #[error("did not converge after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
