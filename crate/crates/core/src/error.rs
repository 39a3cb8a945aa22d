use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("graph generation failed after {attempts} attempts")]
    GenerationFailure { attempts: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("active degree {degree} of node {node} exceeds the declared maximum {delta}")]
    DeltaTooSmall { node: usize, degree: usize, delta: usize },

    #[error("slot of node {node} towards {neighbor} is not integral: {gamma} tokens at weight {numerator}/{denominator}")]
    NonIntegralSlot {
        node: usize,
        neighbor: usize,
        gamma: u64,
        numerator: u64,
        denominator: u64,
    },

    #[error("no window up to the horizon {horizon} is {epsilon}-smoothing; best discrepancy {best}")]
    NotSmoothing { horizon: u64, epsilon: f64, best: f64 },

    #[error("exact product overflowed after {steps} factors")]
    ExactOverflow { steps: usize },

    #[error("thresholds are inverted: lower {lower} is not below upper {upper}")]
    ThresholdInversion { lower: f64, upper: f64 },

    #[error("operation requires the {expected} model")]
    WrongModel { expected: &'static str },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameters(msg.into())
}
