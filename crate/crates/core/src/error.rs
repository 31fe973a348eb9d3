use std::path::PathBuf;

use thiserror::Error;

use crate::datasets::DataError;
use crate::gradcore::GradError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchMismatch { expected: String, found: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite guidance term at step {step}")]
    NonFiniteGuidance { step: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {path} (produced by `{producer}`)")]
    MissingArtifact { path: PathBuf, producer: &'static str },
    #[error("stale artifact {path}: digest {actual} does not match manifest {expected}")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Grad(_) => "grad",
            Error::Data(_) => "data",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::ArchMismatch { .. } => "arch_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFiniteGuidance { .. } => "non_finite_guidance",
            Error::Config(_) => "config",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::DigestMismatch { .. } => "digest_mismatch",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
