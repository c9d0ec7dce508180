//! CLI-level errors with their exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },

    #[error("config error at `{key}`: {msg}")]
    Semantic { key: String, msg: String },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("unsupported checkpoint version {0}")]
    Version(u32),

    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] hymflow_core::CoreError),
}

impl CliError {
    /// 2: configuration/usage; 3: runtime flow errors; 4: I/O and corrupt
    /// artifacts. Verdict failures use exit code 1 at the call sites.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Syntax { .. }
            | CliError::UnknownKey { .. }
            | CliError::Semantic { .. } => 2,
            CliError::Core(_) => 3,
            CliError::Corrupt(_) | CliError::Version(_) | CliError::Shape(_) | CliError::Io(_) => {
                4
            }
        }
    }
}
