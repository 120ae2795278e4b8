use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HdcError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value {value} at feature {feature}")]
    NonFinite { feature: usize, value: f64 },

    #[error("label {label} outside class range 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("{path}: row {row}: {msg}")]
    Parse { path: PathBuf, row: usize, msg: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HdcError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HdcError::Io { context: context.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, HdcError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(HdcError::DimensionMismatch { expected, found })
    }
}
