use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: missing or malformed column `{column}`{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Schema {
        file: PathBuf,
        column: String,
        line: Option<u64>,
    },

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("road geometry: {0}")]
    Geometry(String),

    #[error("recording {recording_id} rejected: {reason}")]
    RecordingRejected { recording_id: u32, reason: String },

    #[error("demonstration {demo_id} unsuitable: {reason}")]
    UnsuitableDemo { demo_id: String, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("-H is not positive definite in segment {segment}")]
    IndefiniteHessian { segment: usize },

    #[error("planning failed at frame {frame}: {reason}")]
    Planning { frame: i64, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("fixture spec: {0}")]
    Spec(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
