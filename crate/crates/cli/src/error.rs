use std::fmt::Display;
use std::path::Path;

use mslg::config::ConfigError;
use mslg::data::DataError;
use mslg::idx::IdxError;
use mslg::labels::LabelError;
use mslg::losses::LossError;
use mslg::model::{CheckpointError, ModelError};
use mslg::trainer::TrainError;
use thiserror::Error;

/// Exit codes: 2 configuration, 3 input/output, 4 numerical abort.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn config(msg: impl Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn io(path: &Path, e: impl Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config(e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) | DataError::Csv { .. } => CliError::Io(e.to_string()),
            DataError::Probe(inner) => (*inner).into(),
            DataError::Math(_) => CliError::Numerical(e.to_string()),
            _ => CliError::config(e),
        }
    }
}

impl From<IdxError> for CliError {
    fn from(e: IdxError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        match e {
            LabelError::Io(_) | LabelError::Corrupt(_) => CliError::Io(e.to_string()),
            _ => CliError::config(e),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteGradient { .. } | ModelError::Math(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::config(e),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Label(l) => l.into(),
            TrainError::Config(c) => c.into(),
            TrainError::Loss(LossError::NonFinite) | TrainError::NonFinite { .. } => {
                CliError::Numerical(e.to_string())
            }
            TrainError::Loss(_)
            | TrainError::EmptyTrainingSet
            | TrainError::EmptyMetaSet
            | TrainError::LabelCount(..) => CliError::config(e),
            TrainError::Callback(msg) => CliError::Io(msg),
        }
    }
}
