use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular information matrix: {0}")]
    Singular(String),

    #[error("no events: {0}")]
    NoEvents(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Input problems the user can fix (bad files, bad flags, bad data)
    /// as opposed to numerical or runtime failures.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Validation { .. }
                | Error::InvalidInput(_)
                | Error::Config(_)
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
