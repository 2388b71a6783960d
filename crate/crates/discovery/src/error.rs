use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// Errors split by exit status: validation problems exit with 1, runtime
/// failures with 2.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn validation(msg: impl Into<String>) -> HarnessError {
        HarnessError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> HarnessError {
        HarnessError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}

impl From<discovery_core::Error> for HarnessError {
    fn from(e: discovery_core::Error) -> HarnessError {
        match e {
            discovery_core::Error::Config(m) => HarnessError::Validation(m),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<discovery_core::FitError> for HarnessError {
    fn from(e: discovery_core::FitError) -> HarnessError {
        HarnessError::Runtime(e.to_string())
    }
}
