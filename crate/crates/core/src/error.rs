use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported encoding: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unresolved reference: {0}")]
    Reference(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("numerical degeneracy: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("background sampling exhausted for `{label}`: {missing_chunks} chunk(s), {missing_s:.3} s short")]
    Exhausted {
        label: String,
        missing_chunks: usize,
        missing_s: f64,
    },

    #[error("unknown label `{0}`")]
    Label(String),

    #[error("class `{0}` has no support; recall undefined")]
    UndefinedClass(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
