use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NRRD header field `{field}`: {reason}")]
    NrrdHeader { field: String, reason: String },

    #[error("unsupported NRRD {field}: {value}")]
    NrrdUnsupported { field: String, value: String },

    #[error("NRRD payload size mismatch: header declares {expected} bytes, found {found}")]
    NrrdPayloadSize { expected: usize, found: usize },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("empty mask")]
    EmptyMask,

    #[error("degenerate ROI: {0}")]
    DegenerateRoi(String),

    #[error("degenerate texture: {0}")]
    DegenerateTexture(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("only one class present in labels")]
    SingleClass,

    #[error("class too small to stratify: {count} samples for {folds} folds")]
    StratifyTooSmall { count: usize, folds: usize },

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
