use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented bound.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// Settings that are individually valid but cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or unsupported file contents.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Clustering cannot produce the requested number of clusters.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A metric has no defined value for the given operands.
    #[error("undefined metric `{metric}`: {reason}")]
    UndefinedMetric { metric: &'static str, reason: String },

    #[error("training diverged at epoch {epoch}, chunk {chunk}: loss = {loss}")]
    Diverged { epoch: usize, chunk: usize, loss: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
