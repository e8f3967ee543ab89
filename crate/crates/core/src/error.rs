use std::path::PathBuf;

use thiserror::Error;

use crate::artmap::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfDomain { index: usize, value: f64 },

    #[error("node {0} does not exist")]
    NodeNotFound(usize),

    #[error("class {0} does not exist")]
    ClassNotFound(ClassId),

    #[error("class {0} is inactive")]
    ClassInactive(ClassId),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("missing prerequisite artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}
