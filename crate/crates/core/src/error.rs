use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PopeError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at `{path}`: {message}")]
    ConfigAt { path: String, message: String },

    #[error("initialization failed after {tries} tries: {detail}")]
    Initialization { tries: usize, detail: String },

    #[error("simulator aborted: {0}")]
    SimulatorAbort(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PopeError> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> PopeError {
    PopeError::Config(msg.into())
}
