use std::io;

use thiserror::Error;

/// Errors raised by the matching pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate contour for individual {individual:?}, encounter {encounter:?}, image {image:?}")]
    Conflict {
        individual: String,
        encounter: String,
        image: String,
    },

    #[error("degenerate contour: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("nearest-neighbor index has no indexable descriptors")]
    EmptyIndex,

    #[error("query has no indexable descriptors")]
    EmptyQuery,

    #[error("inconsistent rankings: {0}")]
    Inconsistent(String),

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("bad binary format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
