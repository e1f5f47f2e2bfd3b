use std::path::PathBuf;

/// Errors raised by the calibration engine.
///
/// Variants fall into three families that front ends map onto exit codes:
/// configuration problems, data problems, and I/O or internal failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("label {label} is outside the declared {coding} coding")]
    InvalidLabel { label: f64, coding: &'static str },

    #[error("empty cell: no rows selected")]
    EmptyCell,

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate shift: {0}")]
    DegenerateShift(String),

    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error category used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::Expression { .. } => ErrorKind::Config,
            Error::Data(_)
            | Error::Parse { .. }
            | Error::InvalidLabel { .. }
            | Error::EmptyCell
            | Error::Schema(_)
            | Error::LengthMismatch { .. }
            | Error::DegenerateShift(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::Io { .. } => ErrorKind::Internal,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}
