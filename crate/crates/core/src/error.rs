use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input data (meshes, volumes, point clouds).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration values outside their documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A file on disk does not match its declared format or content hash.
    #[error("format error: {0}")]
    Format(String),

    /// A checkpoint was built for a different network than the one requested.
    #[error("incompatible architecture: checkpoint has {found}, expected {expected}")]
    Incompatible { expected: String, found: String },

    /// NaN or infinity escaped into a computation that must stay finite.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Process exit code for the command-line front end: 1 for configuration
    /// errors, 2 for data errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::Incompatible { .. } => 1,
            Error::InvalidInput(_) | Error::Format(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}
