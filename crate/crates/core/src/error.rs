use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid machine configuration: {check} failed (residual {residual})")]
    Validation { check: String, residual: f64 },

    #[error("joint pattern does not close: {detail}")]
    GeometryInconsistent { detail: String },

    #[error("leg {leg} has degenerate length {length} mm")]
    DegenerateLeg { leg: usize, length: f64 },

    #[error("database is empty")]
    EmptyDatabase,

    #[error("requested {requested} records but only {available} are available")]
    InsufficientRecords { requested: usize, available: usize },

    #[error("{path}: schema mismatch: missing column `{column}`")]
    SchemaMismatch { path: PathBuf, column: String },

    #[error("{path}: bad value in row {row}, column `{column}`: {value:?}")]
    BadField {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("config hash mismatch: database built with {stored}, supplied config hashes to {supplied}")]
    ConfigHashMismatch { stored: String, supplied: String },

    #[error("DH record for pose {pose_id} has no workspace record")]
    OrphanRecord { pose_id: u64 },

    #[error("unknown pose id {0}")]
    UnknownPose(u64),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
