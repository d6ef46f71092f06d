use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid linear size L={0}: must be a multiple of 3 and at least 3")]
    InvalidL(usize),
    #[error("invalid depth r={0}: must be a multiple of 3 and at least 3")]
    InvalidR(usize),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular composition (pivot {0:e})")]
    SingularComposition(f64),
    #[error("eigensolver did not converge")]
    NonConvergent,
    #[error("series too short for binning: {0} < 8")]
    SeriesTooShort(usize),
    #[error("curve never crosses the target level")]
    NoCrossing,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("too many outcome slots for enumeration: {0} > {1}")]
    TooManySlots(usize, usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("too many flagged samples: {flagged} of {total}")]
    FlaggedExcess { flagged: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
