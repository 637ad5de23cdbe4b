use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid privacy parameter: {0}")]
    InvalidPrivacy(String),

    #[error("budget infeasible: {0}")]
    BudgetInfeasible(String),

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient for batch item {index}")]
    NonFiniteGradient { index: usize },

    #[error("non-finite parameter update")]
    NonFiniteUpdate,

    #[error("non-finite loss in round {round}, batch {batch}")]
    NonFiniteLoss { round: usize, batch: usize },

    #[error("non-convex model: {0}; bounds not applicable")]
    NonConvex(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("round {round}, user {user}: {source}")]
    Round {
        round: usize,
        user: usize,
        #[source]
        source: Box<Error>,
    },
}
