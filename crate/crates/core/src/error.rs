use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("link {link} out of range 1..={n}")]
    LinkOutOfRange { link: usize, n: usize },

    #[error("self-loop on link {0}")]
    SelfLoop(usize),

    #[error("graph has {n} links, limit is {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("ring needs at least 3 links, got {0}")]
    RingTooSmall(usize),

    #[error("invalid priority vector: {0}")]
    InvalidPriority(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid rate {value} at link {link}")]
    InvalidRate { link: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("rate vector lies outside the capacity region")]
    OutsideCapacityRegion,

    #[error(transparent)]
    Lp(#[from] LpError),

    /// A conservation, independence or maximality breach inside the simulator.
    /// Always a bug.
    #[error("invariant violated at slot {slot}: {what}")]
    InvariantViolation { slot: u64, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::InvariantViolation { .. })
    }
}
