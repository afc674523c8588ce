use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),

    #[error("validation error for respondent `{id}`: {message}")]
    Validation { id: String, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty cell: no usable observations for group {0}")]
    EmptyCell(String),

    #[error("degenerate visibility for group {0}: estimated degree is zero")]
    DegenerateVisibility(String),

    #[error("design error: stratum `{0}` has a single PSU and cannot be resampled")]
    SinglePsuStratum(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
