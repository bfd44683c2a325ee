use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite feature in record {image_id:?} at index {index}")]
    NonFiniteFeature { image_id: String, index: usize },

    #[error("duplicate image_id {0:?}")]
    DuplicateImageId(String),

    #[error("feature dimension must be positive")]
    ZeroDimension,

    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),

    #[error("stratum {stratum} has {count} records; at least 2 are required to split")]
    StratumTooSmall { stratum: String, count: usize },

    #[error("support size {size} is not divisible by {classes}")]
    SupportNotDivisible { size: usize, classes: usize },

    #[error("insufficient {class} records: need {needed}, have {available}")]
    InsufficientRecords {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("unbalanced support set: class {class} has {count} entries, expected {expected}")]
    UnbalancedSupport {
        class: usize,
        count: usize,
        expected: usize,
    },

    #[error("invalid k-NN configuration: {0}")]
    InvalidKnnConfig(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid training configuration: {0}")]
    InvalidTrainConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid world spec: {0}")]
    InvalidWorld(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = core::result::Result<T, Error>;
