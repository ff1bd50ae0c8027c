use std::process::ExitCode;

use rccm::RccmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration does not match its schema:\n{}", .0.join("\n"))]
    Schema(Vec<String>),

    #[error("cannot read input data: {0}")]
    Ingestion(String),

    #[error("{0}")]
    Tuning(String),

    #[error("EM stopped after {iterations} iterations without converging (largest change {change:.3e}); results were written anyway")]
    NonConvergence { iterations: usize, change: f64 },

    #[error("no grid candidate reached instability <= {beta}; the least unstable one was written as the selection")]
    Infeasible { beta: f64 },

    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Other(_) => 1,
            CliError::Schema(_) => 3,
            CliError::Ingestion(_) => 4,
            CliError::Tuning(_) => 5,
            CliError::NonConvergence { .. } => 6,
            CliError::Infeasible { .. } => 7,
        })
    }
}

impl From<RccmError> for CliError {
    fn from(e: RccmError) -> Self {
        match e {
            RccmError::InvalidTuning { .. } => CliError::Tuning(e.to_string()),
            RccmError::DegenerateColumn { .. } => CliError::Ingestion(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
