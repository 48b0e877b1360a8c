use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit codes:
/// config/contract -> 2, data/port/io -> 3, numeric -> 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure in op `{op}`{}", context.as_ref().map(|c| format!(" ({c})")).unwrap_or_default())]
    Numeric { op: String, context: Option<String> },

    #[error("data error{}{}: {msg}", path.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default(), line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Data {
        path: Option<PathBuf>,
        line: Option<usize>,
        msg: String,
    },

    #[error("augmentation port `{port}` failed: {msg}")]
    Port { port: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(op: impl Into<String>) -> Self {
        Error::Numeric {
            op: op.into(),
            context: None,
        }
    }

    pub fn numeric_at(op: impl Into<String>, context: impl Into<String>) -> Self {
        Error::Numeric {
            op: op.into(),
            context: Some(context.into()),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data {
            path: None,
            line: None,
            msg: msg.into(),
        }
    }

    pub fn data_at(path: impl Into<PathBuf>, line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Data {
            path: Some(path.into()),
            line,
            msg: msg.into(),
        }
    }

    pub fn port(port: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Port {
            port: port.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) | Error::Config(_) => 2,
            Error::Data { .. } | Error::Port { .. } | Error::Io(_) => 3,
            Error::Numeric { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
