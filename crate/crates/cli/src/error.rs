use std::process::ExitCode;

use flowcast::godunov::SolverError;
use flowcast::labeling::LabelingError;
use flowcast::neural::NeuralError;
use flowcast::pipeline::PipelineError;
use flowcast::sensor_data::SensorDataError;
use flowcast::signal::SignalError;
use thiserror::Error;

/// Bad inputs exit with 1, failures while computing with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(1),
            CliError::Runtime(_) => ExitCode::from(2),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn invalid(message: impl Into<String>) -> CliError {
    CliError::Validation(message.into())
}

pub fn runtime(message: impl Into<String>) -> CliError {
    CliError::Runtime(message.into())
}

impl From<SensorDataError> for CliError {
    fn from(e: SensorDataError) -> Self {
        invalid(e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        invalid(e.to_string())
    }
}

impl From<LabelingError> for CliError {
    fn from(e: LabelingError) -> Self {
        invalid(e.to_string())
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Divergence { .. } => runtime(e.to_string()),
            _ => invalid(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidGrid(_) | SolverError::InvalidConfig(_) | SolverError::SeriesTooShort { .. } => {
                invalid(e.to_string())
            }
            _ => runtime(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Solver(inner) => inner.into(),
            PipelineError::Neural(inner) => inner.into(),
            PipelineError::NegativeInitialState(_) | PipelineError::ZeroReference(_) => runtime(e.to_string()),
            _ => invalid(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        runtime(e.to_string())
    }
}
