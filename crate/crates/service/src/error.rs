use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("corrupt event log at sequence {seq}: {message}")]
    CorruptLog { seq: u64, message: String },
    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Forbidden(_) => "forbidden",
            ServiceError::Validation(_) => "validation",
            ServiceError::CorruptLog { .. } => "corrupt_log",
            ServiceError::Storage(_) => "storage",
        }
    }
}
