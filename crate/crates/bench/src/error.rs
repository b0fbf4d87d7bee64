use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] ksmm_core::KsError),

    #[error("usage: {0}")]
    Usage(String),

    #[error("format: {0}")]
    Format(String),

    #[error("analysis needs records for at least two backends, found {0}")]
    TooFewBackends(usize),

    #[error("singular design matrix: {0}")]
    SingularFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
