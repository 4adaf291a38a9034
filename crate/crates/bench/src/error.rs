use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Bad flags, configuration values or grid files.
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] chunked_ode::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
