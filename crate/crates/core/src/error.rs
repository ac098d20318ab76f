use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the forecasting and explanation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("trajectory too short: need at least {needed} points, found {found}")]
    TooShort { needed: usize, found: usize },

    #[error("timestamps not strictly increasing at point {index}")]
    NonIncreasingTime { index: usize },

    #[error("unknown trajectory kind `{0}`")]
    UnknownKind(String),

    #[error("checkpoint not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("bad magic: expected `TRAJXAI`, found `{0}`")]
    BadMagic(String),

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u64),

    #[error("checkpoint shape inconsistency: {0}")]
    CheckpointShape(String),

    #[error("operation not supported by this model: {0}")]
    Unsupported(&'static str),

    #[error("too many players for exact enumeration: {players} > {max}")]
    TooManyPlayers { players: usize, max: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
