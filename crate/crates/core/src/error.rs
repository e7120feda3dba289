use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable { attempts: u32, reason: String },

    #[error("backend cannot return token log-probabilities: {0}")]
    ScoringUnsupported(String),

    #[error("scripted backend has no entry for {kind} {key:?}")]
    NotScripted { kind: &'static str, key: String },

    #[error("invalid backend response: {0}")]
    BadResponse(String),

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(&'static str),

    #[error("need at least 2 eligible tokens for similarity, found {found}")]
    TooFewTokens { found: usize },

    #[error("no step count in [1, 100] found in response")]
    NoCountFound,

    #[error("complexity unparseable: collected {collected} of {wanted} samples ({last_error})")]
    ComplexityUnparseable {
        collected: usize,
        wanted: usize,
        last_error: String,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("program has no statements")]
    EmptyProgram,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pool has {available} entries, {requested} requested")]
    PoolTooSmall { available: usize, requested: usize },

    #[error("every candidate failed to score")]
    AllCandidatesFailed,

    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("instance {0} has fewer than 2 options")]
    TooFewOptions(String),

    #[error("task {task} has only {available} demonstrations from other tasks, {requested} needed")]
    InsufficientPool {
        task: String,
        available: usize,
        requested: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("every evaluation item failed")]
    AllItemsFailed,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
