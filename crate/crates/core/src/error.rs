use std::io;
use std::path::PathBuf;

use crate::annotations::{AnnotationId, SourceDigest};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which record collection a duplicate id was found in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Image,
    Annotation,
    Category,
}

impl std::fmt::Display for RecordKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecordKind::Image => "image",
            RecordKind::Annotation => "annotation",
            RecordKind::Category => "category",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("annotation file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed JSON at line {line}, column {column}: {message}")]
    MalformedJson {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("annotation {annotation} references missing {field} {target}")]
    DanglingReference {
        annotation: AnnotationId,
        field: &'static str,
        target: u64,
    },

    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: RecordKind, id: u64 },

    #[error("dataset has no images or no annotations")]
    EmptyDataset,

    #[error("table was computed from dataset {found}, expected {expected}")]
    ProvenanceMismatch {
        expected: SourceDigest,
        found: SourceDigest,
    },

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config index {index} out of range ({len} configs)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Converts a serde_json error into the matching parse error, keeping its position.
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match err.classify() {
            Category::Io => Error::Io(err.into()),
            Category::Data => Error::SchemaViolation(err.to_string()),
            Category::Syntax | Category::Eof => Error::MalformedJson {
                line: err.line(),
                column: err.column(),
                message: err.to_string(),
            },
        }
    }
}
