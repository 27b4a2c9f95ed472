use thiserror::Error;

use crate::dyadic::DyadicInterval;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("depth {depth} outside the supported range {min}..={max}")]
    Bounds { depth: u32, min: u32, max: u32 },

    #[error("interval {interval} cannot be resolved on a grid of depth {depth}")]
    Resolution { interval: DyadicInterval, depth: u32 },

    #[error("shape mismatch: expected length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("{inner} is not strictly contained in {outer}")]
    NotStrictlyContained {
        inner: DyadicInterval,
        outer: DyadicInterval,
    },

    #[error("depth mismatch: {left} vs {right}")]
    DepthMismatch { left: u32, right: u32 },

    #[error("cannot compose two independently randomized operators")]
    UnsupportedComposition,

    #[error("sign absorption needs a Haar input leg on the outer paraproduct")]
    RuleNotApplicable,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown case `{0}`")]
    UnknownCase(String),

    #[error("invalid symbol file: {0}")]
    SymbolFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
