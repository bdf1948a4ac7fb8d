use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CrispError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CrispError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("case `{case_id}` has label `{label}` which is not in the label set")]
    UnknownLabel { case_id: String, label: String },

    #[error("referenced file does not exist: {}", .0.display())]
    DanglingReference(PathBuf),

    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },

    #[error("{path}: bad magic {found:?}, expected \"CEM1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: payload truncated, expected {expected} bytes but found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("embedding id file has {ids} ids but matrix has {rows} rows")]
    RowMismatch { ids: usize, rows: usize },

    #[error("patch id `{0}` not present")]
    MissingId(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("case `{0}` has an empty signature")]
    EmptySignature(String),

    #[error("case `{case_id}` row {row} has zero norm")]
    ZeroNorm { case_id: String, row: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid descriptor for `{patch_id}`: {reason}")]
    InvalidDescriptor { patch_id: String, reason: String },

    #[error("invalid image: {0}")]
    Image(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    InvalidConfig(Vec<String>),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl CrispError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CrispError::Io {
            path: path.into(),
            source,
        }
    }
}
