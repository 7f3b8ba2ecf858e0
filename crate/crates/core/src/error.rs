use alloc::string::String;

use crate::record::RecordError;
use crate::similarity::ProviderError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure of a scorer, fit, or metric.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("record has an empty output")]
    EmptyOutput,
    #[error("token step {position} has no alternatives")]
    MissingAlternatives { position: usize },
    #[error("token step {position} has no unconditional log-probability")]
    MissingUnconditional { position: usize },
    #[error("similarity function unavailable: {0}")]
    SimilarityUnavailable(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample {index} has a non-finite total log-probability")]
    MissingSampleLogprobs { index: usize },
    #[error("sample {index} carries no token log-probabilities")]
    MissingSampleTokens { index: usize },
    #[error("similarity matrix row {row} has zero degree")]
    SingularDegree { row: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("claim {claim_id} has no P(True) log-probability")]
    MissingPTrue { claim_id: String },
    #[error("record has no embedding")]
    MissingEmbedding,
    #[error("record has no verbalized confidence")]
    MissingVerbalized,
    #[error("token step {position}: no alternative entails or contradicts")]
    EmptyDenominator { position: usize },
    #[error("claim index {index} out of range for output of length {len}")]
    ClaimIndexOutOfRange { index: usize, len: usize },
    #[error("calibration uncertainties span a degenerate range")]
    DegenerateRange,
    #[error("invalid bin count {bins} for {pairs} pairs")]
    InvalidBinCount { bins: usize, pairs: usize },
    #[error("model has not been fitted")]
    UnfittedModel,
    #[error("quality is degenerate: oracle and random rejection areas coincide")]
    DegenerateQuality,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("labels contain no positives")]
    NoPositives,
    #[error("value {value} outside [0, 1]")]
    RangeViolation { value: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("eigendecomposition did not converge")]
    NoConvergence,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Record(#[from] RecordError),
}
