use std::fmt;

use thiserror::Error;

/// Where a validation failure was found: the offending field and, when known,
/// the record (example id, token index, line) it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldPath {
    pub record: Option<String>,
    pub field: String,
}

impl FieldPath {
    pub fn new(field: impl Into<String>) -> Self {
        FieldPath { record: None, field: field.into() }
    }

    pub fn in_record(record: impl Into<String>, field: impl Into<String>) -> Self {
        FieldPath { record: Some(record.into()), field: field.into() }
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.record {
            Some(record) => write!(f, "{record}: {}", self.field),
            None => f.write_str(&self.field),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error at {path}: {message}")]
    Validation { path: FieldPath, message: String },

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("parse error at line {line} (byte offset {offset}): {message}")]
    Parse { line: usize, offset: usize, message: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("degenerate baseline: k = N = {0}, chance overlap equals the maximum")]
    DegenerateBaseline(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at step {step}: {message}")]
    NonFiniteLoss { step: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(path: FieldPath, message: impl Into<String>) -> Self {
        Error::Validation { path, message: message.into() }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// I/O failures are reported separately from data problems by the CLI.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
