use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer {index}: {reason}")]
    Layout { index: usize, reason: String },

    #[error("tensor format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("divergence at iteration {iter}: loss = {loss}")]
    Divergence { iter: u64, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Message without the category prefix.
    pub fn detail(&self) -> String {
        match self {
            Error::InvalidArgument(m) | Error::Format(m) | Error::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }

    /// Short category name used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidArgument(_) => "argument",
            Error::Layout { .. } => "layout",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Manifest { .. } => "manifest",
            Error::Divergence { .. } => "divergence",
            Error::Io { .. } => "io",
        }
    }
}
