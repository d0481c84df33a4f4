use std::io;

use sentstruct_core::Error as CoreError;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 2,
    Data = 3,
    Numerical = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("not an SEB file (bad magic)")]
    NotSeb,

    #[error("not a checkpoint file (bad magic)")]
    NotCheckpoint,

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("non-finite value at byte offset {offset}")]
    InvalidValue { offset: usize },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) | CliError::Core(CoreError::BadConfig(_)) => ExitCode::Usage,
            CliError::Core(CoreError::NumericalError { .. } | CoreError::TrainDiverged { .. }) => {
                ExitCode::Numerical
            }
            _ => ExitCode::Data,
        }
    }
}
