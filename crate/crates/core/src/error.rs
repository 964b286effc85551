use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parent count {0} out of range (max {1})")]
    ParentCount(usize, usize),
    #[error("vector length {found} does not match 2^{k} = {expected}")]
    LengthMismatch { k: usize, expected: usize, found: usize },
    #[error("table length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("probability {value} for {what} is outside [0, 1]")]
    Probability { what: String, value: f64 },
    #[error("negative weight {value} for {what}")]
    NegativeWeight { what: String, value: f64 },
    #[error("weights exceed 1 (total {0})")]
    WeightsExceedOne(f64),
    #[error("weights must sum to exactly 1 in strict normalization mode (total {0})")]
    WeightsNotNormalized(f64),
    #[error("cycle detected through vertex {0:?}")]
    Cycle(String),
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("duplicate vertex {0:?}")]
    DuplicateVertex(String),
    #[error("duplicate edge {0:?} -> {1:?}")]
    DuplicateEdge(String, String),
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
    #[error("invalid model for vertex {vertex:?}: {reason}")]
    InvalidModel { vertex: String, reason: String },
    #[error("malformed network document: {0}")]
    Parse(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("infeasible certificate at vertex {0:?}")]
    Infeasible(String),
    #[error("seed sets overlap at vertex {0:?}")]
    OverlappingSeeds(String),
    #[error("blueprint shape does not match network: {0}")]
    ShapeMismatch(String),
    #[error("budget {budget} out of range 1..={max}")]
    Budget { budget: usize, max: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
