use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("metric undefined: reference has zero total variance")]
    UndefinedMetric,

    #[error("too few points: need {needed}, found {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("no peaks detected in the first {rows} rows")]
    NoPeaks { rows: usize },

    #[error("library matrix is rank deficient (rank {rank} of {terms}); decrease zeta or prune the library")]
    RankDeficient { rank: usize, terms: usize },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("integration overflowed at step {step}")]
    Overflow { step: usize },

    #[error("every sweep candidate overflowed")]
    AllCandidatesFailed,

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("empty parameter grid for `{0}`")]
    EmptyGrid(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
