//! File formats: PNG (8/16-bit) ingestion, 16-bit PNG export, and the
//! portable float map used for depth and guidance planes.

pub mod pfm;
pub mod png;

use std::path::PathBuf;
use thiserror::Error;

/// Errors raised while reading or writing image files.
#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("unsupported image layout in {path}: {reason}")]
    Layout { path: PathBuf, reason: String },
}

impl ImageIoError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ImageIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn decode(path: &std::path::Path, reason: impl Into<String>) -> Self {
        ImageIoError::Decode {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub(crate) fn layout(path: &std::path::Path, reason: impl Into<String>) -> Self {
        ImageIoError::Layout {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }
}
