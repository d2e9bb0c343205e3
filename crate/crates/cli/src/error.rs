use injlock::Error as CoreError;
use thiserror::Error;

use crate::waveio::ParseError;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Waveform(#[from] ParseError),
    #[error("malformed results container: {0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => 2,
            Self::Waveform(_) | Self::Parse(_) => 3,
            Self::Core(CoreError::Parameter(_) | CoreError::Normalization(_)) => 2,
            Self::Core(_) => 4,
        }
    }
}
