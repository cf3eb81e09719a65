use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: invalid UTF-8")]
    Decode { path: PathBuf, line: usize },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("lexicon `{0}` contains no entries")]
    EmptyLexicon(String),
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: io::Error },
    #[error("invalid template pack: {0}")]
    Pack(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid attribution: {0}")]
    Attribution(String),
    #[error("index {index} out of range for length {len}")]
    Range { index: usize, len: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("undefined result: {0}")]
    Undefined(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("sheet is incomplete, rows without verdict: {}", .0.join(", "))]
    IncompleteSheet(Vec<String>),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("stage `{stage}` failed: {cause}")]
    Stage { stage: &'static str, cause: Box<Error> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: io::Error) -> Self {
        Error::Io { path: path.into(), cause }
    }

    /// Errors that stem from bad inputs or configuration rather than a
    /// failure while doing work. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Stage { cause, .. } => cause.is_validation(),
            Error::Config(_) | Error::Pack(_) | Error::EmptyLexicon(_) | Error::Decode { .. } | Error::Parse { .. }
            | Error::IncompleteSheet(_) => true,
            _ => false,
        }
    }
}
