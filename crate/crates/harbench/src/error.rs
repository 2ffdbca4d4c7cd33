use thiserror::Error;

/// Unified error type. The variant decides the CLI exit code:
/// config errors exit 1, data errors exit 2, stage/model errors exit 3.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn stage(stage: &str, msg: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            message: msg.into(),
        }
    }

    /// Stable process exit code contract for harnesses.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) => 2,
            Error::Stage { .. } => 3,
        }
    }
}
