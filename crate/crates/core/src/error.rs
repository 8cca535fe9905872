use std::path::PathBuf;

use thiserror::Error;

use crate::agents::PromptError;
use crate::analytics::MetricError;
use crate::charting::ChartError;
use crate::gateway::GatewayError;
use crate::market_data::DataError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error. Each variant maps onto one failure class the CLI
/// reports with its own exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Chart(#[from] ChartError),

    #[error(transparent)]
    Prompt(#[from] PromptError),

    #[error(transparent)]
    Metric(#[from] MetricError),

    #[error("{role} agent failed on {date}: {source}")]
    Agent {
        role: String,
        date: String,
        #[source]
        source: GatewayError,
    },

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Prompt(_) | Error::Json(_) => 2,
            Error::Data(_) | Error::Chart(_) | Error::Metric(_) | Error::Io { .. } => 3,
            Error::Checkpoint { .. } => 2,
            Error::Agent { .. } | Error::Gateway(_) => 4,
        }
    }
}
