use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("polytope needs at least one generator")]
    EmptyPolytope,
    #[error("direction must be non-zero")]
    ZeroDirection,
    #[error("unknown selection rule `{0}`")]
    UnknownSelectionRule(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("centroid field undefined at the requested point (no sample within 5 bandwidths)")]
    UndefinedEstimate,
    #[error("trajectory clock has not advanced")]
    ZeroElapsedClock,
    #[error("best-response oracle failed for player {player}")]
    BestResponse { player: usize },
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
