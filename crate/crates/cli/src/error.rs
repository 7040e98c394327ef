use std::fmt;

use tmkd::config::ConfigError;
use tmkd::models::CheckpointError;
use tmkd::numcore::TensorError;
use tmkd::textguide::EmbeddingError;
use tmkd::train::TrainError;
use tmkd::viewgen::ViewError;

/// A failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Verification(String),
    Input(String),
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Input(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Verification(m) | CliError::Input(m) | CliError::Divergence(m) => f.write_str(m),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } | TrainError::Tensor(TensorError::Numeric { .. }) => {
                CliError::Divergence(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        TrainError::from(e).into()
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_error!(ConfigError, CheckpointError, EmbeddingError, ViewError, std::io::Error);
