use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Requested system exceeds what the in-memory representation supports.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Argument outside the mathematical domain of the operation.
    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Non-finite values, failed factorizations, ill-conditioned eigenbases.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("csv schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Numerical(format!("lapack: {e}"))
    }
}

impl Error {
    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Schema(_) | Error::Domain(_) => 2,
            Error::Capacity(_) => 3,
            Error::Numerical(_) | Error::DimensionMismatch { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}
