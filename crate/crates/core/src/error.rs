use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("no matching images found under {0}")]
    EmptyCorpus(PathBuf),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate})")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("missing artifact {path}: run `{step}` first")]
    MissingArtifact { step: &'static str, path: PathBuf },

    #[error("config hash mismatch: {0}")]
    ConfigMismatch(String),

    #[error("output directory is locked by another run (remove {0} if stale)")]
    Locked(PathBuf),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short stable identifier, used as the prefix of CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Param(_) => "param",
            Error::EmptyCorpus(_) => "empty-corpus",
            Error::DegenerateTraining(_) => "degenerate-training",
            Error::Divergence { .. } => "divergence",
            Error::MissingArtifact { .. } => "missing-artifact",
            Error::ConfigMismatch(_) => "config-mismatch",
            Error::Locked(_) => "locked",
            Error::Json(_) => "json",
        }
    }
}
