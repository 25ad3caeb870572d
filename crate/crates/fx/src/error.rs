use std::io::ErrorKind;

use fx_core::dataset::DatasetError;
use fx_core::eval::EvalError;
use fx_core::ingest::IngestError;
use fx_core::net::NetError;
use fx_core::sim::SimError;
use thiserror::Error;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation, bad config or missing inputs (exit 1).
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data failed validation (exit 2).
    #[error("validation error: {0}")]
    Validation(String),
    /// Anything that went wrong while running (exit 3).
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match &e {
            IngestError::Io { source, .. } if source.kind() == ErrorKind::NotFound => {
                CliError::Usage(e.to_string())
            }
            IngestError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Ingest(inner) => inner.into(),
            DatasetError::Io(inner) if inner.kind() == ErrorKind::NotFound => CliError::Usage(inner.to_string()),
            DatasetError::Io(inner) => CliError::Runtime(inner.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Format(_) | NetError::Shape { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Store { .. } => CliError::Validation(e.to_string()),
            EvalError::Grid(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
