use std::path::{Path, PathBuf};

use serde::Serialize;

/// Errors from file handling, configuration and the model code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] lnssm_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn config(path: &Path, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config { .. } => "config",
            CliError::Usage(_) => "usage",
            CliError::Model(_) => "model",
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::Parse { .. } => 2,
            _ => 1,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn record(&self) -> ErrorRecord {
        let (path, line) = match self {
            CliError::Io { path, .. } | CliError::Config { path, .. } => {
                (Some(path.display().to_string()), None)
            }
            CliError::Parse { path, line, .. } => (Some(path.display().to_string()), Some(*line)),
            _ => (None, None),
        };
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
            path,
            line,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}
