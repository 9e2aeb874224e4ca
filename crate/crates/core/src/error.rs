use std::path::PathBuf;

/// Errors raised by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is missing, malformed or out of range.
    #[error("configuration error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("reduction ratio undefined: baseline mean is zero")]
    UndefinedRatio,

    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(what: impl Into<String>, reason: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            reason: reason.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (bad config, bad arguments)
    /// rather than by a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidArgument(_) | Error::Format { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
