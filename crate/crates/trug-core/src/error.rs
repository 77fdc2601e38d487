use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrugError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("rejection sampler exceeded {0} proposals")]
    SamplerOverrun(usize),

    #[error("model too large for exact enumeration: {n} visible units (limit {limit})")]
    EnumerationTooLarge { n: usize, limit: usize },

    #[error("non-finite gradient for parameter '{0}'")]
    NonFiniteGradient(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    CsvParse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("checkpoint/model mismatch: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrugError>;
