use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the dwell-time pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("config error for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("data error at {context}: {message}")]
    Data { context: String, message: String },

    #[error("schema error: missing column `{column}`")]
    Schema { column: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("metric domain error: {0}")]
    MetricDomain(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Diverged {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("load error in `{field}`: {message}")]
    Load { field: String, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn data(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn load(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Load {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid configuration or invocation rather
    /// than by data or the runtime environment.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Usage(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
