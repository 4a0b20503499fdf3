use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },

    #[error("record {record_id}: invalid field `{field}`: {message}")]
    Validation {
        record_id: String,
        field: String,
        message: String,
    },

    #[error("{0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("AUROC undefined: {correct} correct and {incorrect} incorrect observations")]
    UndefinedAuroc { correct: usize, incorrect: usize },

    #[error("no records in {0}")]
    NoRecords(String),

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(
        record_id: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Validation {
            record_id: record_id.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status for this error: 1 validation, 2 usage/configuration, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::NoRecords(_) => 1,
            Error::Range(_)
            | Error::Config(_)
            | Error::UndefinedAuroc { .. }
            | Error::Generation(_) => 2,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 3,
        }
    }
}
