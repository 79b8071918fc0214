use std::path::Path;

use mtaf::corpus::CorpusError;
use mtaf::evalpipe::EvalError;
use mtaf::generator::GenerateError;
use mtaf::metrics::MetricsError;
use mtaf::model::ModelError;
use mtaf::stats::StatsError;
use mtaf::tokenizer::TokenizerError;
use mtaf::trainer::{CheckpointError, TrainError};
use thiserror::Error;

/// Failure classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with the file it concerns.
    pub(crate) fn at(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{p}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{p}: {m}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            TrainError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GenerateError> for CliError {
    fn from(e: GenerateError) -> Self {
        match e {
            GenerateError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            GenerateError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Degenerate(_) | StatsError::NoConvergence(_) => CliError::Numeric(e.to_string()),
            StatsError::Domain(_) | StatsError::Unbalanced(_) => CliError::Data(e.to_string()),
        }
    }
}
