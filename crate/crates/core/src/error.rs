use thiserror::Error;

/// Errors raised by the library. Certificate failures are never errors; they
/// are reported as entries of the corresponding report types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("time index {index} out of range 0..={horizon}")]
    IndexOutOfRange { index: usize, horizon: usize },

    #[error("random variable has {got} values, space has {expected} outcomes")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("objects live on different spaces")]
    SpaceMismatch,

    #[error("not a stopping time: {0}")]
    NotStoppingTime(String),

    #[error("not a martingale: {0}")]
    NotMartingale(String),

    #[error("expected a zero-mean input, got mean {mean}")]
    NonzeroMean { mean: f64 },

    #[error("invalid exponent {name} = {value}: {reason}")]
    InvalidExponent {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("envelope ladder requested without an envelope")]
    MissingEnvelope,

    #[error("stopping-time count exceeds cap {cap}")]
    EnumerationOverflow { cap: u64 },

    #[error("null set: {0}")]
    NullSet(&'static str),

    #[error("coefficient for ladder level {k} is not representable (underflow or overflow)")]
    CoefficientRange { k: i32 },

    #[error("linear system is {0}")]
    Singular(&'static str),

    #[error("corpus size bound exceeded: {0}")]
    SizeBound(String),

    #[error("malformed document: {0}")]
    Document(String),
}

pub type Result<T> = std::result::Result<T, Error>;
