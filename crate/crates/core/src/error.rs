// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every stage of the audit.

use std::path::PathBuf;

/// Errors produced by the audit pipeline.
#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    /// Invalid lexicon, unknown stratification field, bad flag value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed binary container.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// NPY dtype other than little-endian float32.
    #[error("unsupported dtype: {0}")]
    UnsupportedDtype(String),

    /// Array rank or dimensions that do not fit the contract.
    #[error("shape error: {0}")]
    Shape(String),

    /// Cross-artifact inconsistency (duplicate ids, row-count mismatch, ...).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A statistical contrast that is undefined for the given input.
    #[error("analysis error: {0}")]
    Analysis(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Stratified fold assignment impossible.
    #[error("stratification error: {0}")]
    Stratification(String),

    /// Contingency table with an empty row or column.
    #[error("degenerate table: {0}")]
    DegenerateTable(String),

    /// A run directory is missing one of its artifacts.
    #[error("aggregation error: {dir} is missing {file}")]
    Aggregation { dir: PathBuf, file: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, AuditError>;

impl AuditError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AuditError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        AuditError::Csv {
            path: path.into(),
            source,
        }
    }
}
