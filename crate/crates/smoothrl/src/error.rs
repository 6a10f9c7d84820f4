use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("trajectory too short: need at least {min} samples, got {got}")]
    TrajectoryTooShort { min: usize, got: usize },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("infeasible demonstration: {0}")]
    InfeasibleDemonstration(String),

    #[error("episode finished: cannot act on a completed episode")]
    EpisodeFinished,

    #[error("episode not done: finalize requires a completed episode")]
    EpisodeNotDone,

    #[error("boundary action: component {index} is at or outside the squashed range")]
    BoundaryAction { index: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no demonstrations provided")]
    EmptyDemos,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for usage/config problems, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalFailure(_) => 3,
            _ => 2,
        }
    }
}
