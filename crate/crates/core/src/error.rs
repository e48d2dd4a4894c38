use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // expression engine
    #[error("incomplete token sequence: {open} open slot(s) after {len} tokens")]
    IncompleteSequence { len: usize, open: usize },
    #[error("trailing tokens: expression closed after {used} of {len} tokens")]
    TrailingTokens { used: usize, len: usize },
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("feature dimension mismatch: need at least {needed}, got {got}")]
    DimensionMismatch { needed: usize, got: usize },
    #[error("prefix of {len} tokens with {open} open slot(s) cannot fit in {max_length} tokens")]
    InfeasiblePrefix { len: usize, open: usize, max_length: usize },
    #[error("expression exceeds the library length cap ({len} > {max_length})")]
    TooLong { len: usize, max_length: usize },

    // policy
    #[error("sequence is not producible by the sampler: {0}")]
    InvalidSequence(String),
    #[error("checkpoint does not match: {0}")]
    CheckpointMismatch(String),

    // solver
    #[error("LP numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("no fractional integer variable to branch on")]
    NoFractionalVariable,
    #[error("frontier is empty")]
    EmptyFrontier,
    #[error("instance is infeasible")]
    Infeasible,
    #[error("node limit of {0} reached")]
    NodeLimitReached(usize),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    // features
    #[error("root LP bound has not been recorded")]
    MissingRootBound,

    // generators
    #[error("infeasible generator config: {0}")]
    InfeasibleConfig(String),

    // datasets and files
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
