use std::io;

use thiserror::Error;

/// Errors produced by the inducement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("quadrature needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no treated observations (G=1); the treated-arm outcome model is unidentified")]
    NoTreatedRows,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("chain too short: need at least {min} values, got {got}")]
    ChainTooShort { min: usize, got: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
