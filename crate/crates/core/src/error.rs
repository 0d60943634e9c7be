use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("duplicate text id {0:?} in corpus manifest")]
    DuplicateId(String),

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("insufficient tokens: have {have}, unit length is {need}")]
    InsufficientTokens { have: usize, need: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix format error: {0}")]
    Format(String),

    #[error("degenerate clustering: all rows are identical")]
    DegenerateClustering,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("contract violation: {0}")]
    Contract(String),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::MissingFile(_)
            | Error::DuplicateId(_)
            | Error::MalformedManifest(_)
            | Error::Io { .. }
            | Error::DegenerateInput(_)
            | Error::InsufficientTokens { .. }
            | Error::Format(_)
            | Error::DegenerateClustering
            | Error::DegenerateGeometry(_)
            | Error::InsufficientData(_) => ErrorKind::Data,
            Error::Contract(_) => ErrorKind::Internal,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
