use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("vector must have at least one element")]
    EmptyVector,

    #[error("negative element {value} at index {index}")]
    NegativeElement { index: usize, value: f64 },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("non-finite gradient component at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("invalid hyperparameter `{field}`: {message}")]
    InvalidHyperparam { field: &'static str, message: String },

    #[error("optimizer variant {actual} cannot be stepped as {expected}")]
    VariantMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("epsilon0 threshold must be positive for C-Adam_V2")]
    ThresholdUnset,

    #[error("negative projection weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("invalid box: lower bound {lower} exceeds upper bound {upper} at index {index}")]
    InvalidBox { index: usize, lower: f64, upper: f64 },

    #[error("delta = beta1/sqrt(beta2) = {delta} must be < 1")]
    DeltaNotLessThanOne { delta: f64 },

    #[error("regret bound requires a bounded domain")]
    UnboundedDomain,

    #[error("gradient history of {cells} cells exceeds the cap of {cap}")]
    HistoryTooLarge { cells: usize, cap: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("decision boundary is degenerate (both weights zero)")]
    DegenerateBoundary,

    #[error("{0}")]
    InvalidModel(String),

    #[error("bad IDX magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated IDX file: {0}")]
    TruncatedFile(String),

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("dataset missing: {}", .0.display())]
    DatasetMissing(PathBuf),

    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("incompatible runs: {0}")]
    IncompatibleRuns(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from bad settings or inputs named by the
    /// user, as opposed to something that went wrong mid-run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::ConfigInvalid { .. }
                | Error::InvalidHyperparam { .. }
                | Error::ThresholdUnset
                | Error::DeltaNotLessThanOne { .. }
                | Error::HistoryTooLarge { .. }
                | Error::InvalidModel(_)
                | Error::DatasetMissing(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
