use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// Malformed input data. `line` is 1-based when the source is line-oriented.
    #[error("data error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Data {
        line: Option<usize>,
        message: String,
    },

    /// The remote side answered, but not according to the protocol.
    #[error("protocol error ({context}): {message}")]
    Protocol { context: String, message: String },

    #[error("transport error ({context}): {message}")]
    Transport {
        context: String,
        message: String,
        retryable: bool,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data {
            line: None,
            message: msg.into(),
        }
    }

    pub fn data_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            line: Some(line),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Error::Transport {
                retryable: true,
                ..
            }
        )
    }

    /// Prefixes the context of transport and protocol errors, e.g. with a tweet id.
    pub fn with_context(self, outer: impl std::fmt::Display) -> Self {
        match self {
            Error::Transport {
                context,
                message,
                retryable,
            } => Error::Transport {
                context: format!("{outer}, {context}"),
                message,
                retryable,
            },
            Error::Protocol { context, message } => Error::Protocol {
                context: format!("{outer}, {context}"),
                message,
            },
            other => other,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 transport.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::NotFound(_) => 1,
            Error::Data { .. } | Error::Io { .. } | Error::Protocol { .. } => 2,
            Error::Transport { .. } => 3,
        }
    }
}
