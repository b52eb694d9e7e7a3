use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulator library and CLI.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}

impl SimError {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::InvalidConfig(_) => "invalid-config",
            SimError::Domain(_) => "domain",
            SimError::Data(_) => "data",
            SimError::UnknownScenario(_) => "unknown-scenario",
            SimError::Io { .. } => "io",
            SimError::Csv(_) => "csv",
            SimError::Parse(_) => "parse",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
