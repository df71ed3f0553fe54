//! Crate-wide error type.

/// Errors surfaced by the restoration library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("solver diverged: {0}")]
    Diverged(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("tiff error: {0}")]
    Tiff(#[from] tiff::TiffError),
    #[error("manifest error: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, Error>;
