use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("parameter layouts differ")]
    LayoutMismatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("consistency targets inconsistent with memory mask: {0}")]
    MaskMismatch(String),
    #[error("component {0} is not available for this learner")]
    MissingComponent(&'static str),
    #[error("malformed data file {path}: {reason}")]
    Data { path: PathBuf, reason: String },
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("missing evaluation snapshot for task {0}")]
    MissingSnapshot(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
