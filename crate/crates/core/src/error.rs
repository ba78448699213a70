use std::io;

/// Errors raised anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("no unsensed cell with known ground truth to evaluate")]
    NoUnsensedCells,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("cycle {cycle} has only {readings} reading(s), need at least 2")]
    TooSparse { cycle: usize, readings: usize },
    #[error("rank {rank} is outside [1, {max}]")]
    InvalidRank { rank: usize, max: usize },
    #[error("too few cycles: {0}")]
    TooFewCycles(String),

    #[error("singular normal equations in least-squares solve")]
    SingularSolve,
    #[error("observation window is empty")]
    EmptyWindow,

    #[error("leave-one-out assessment needs at least 2 sensed cells, got {0}")]
    TooFewSensed(usize),
    #[error("error pool is empty")]
    EmptyPool,

    #[error("cell {0} was already selected this cycle")]
    CellAlreadySelected(usize),
    #[error("cell {0} has no ground truth this cycle")]
    CellMissingTruth(usize),
    #[error("episode has no cycles left")]
    EpisodeExhausted,
    #[error("every action is masked")]
    AllMasked,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),

    #[error("Q-table grew past {0} states")]
    StateSpaceExplosion(usize),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
