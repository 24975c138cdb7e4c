use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// A data file row failed validation. `row` is 1-based and counts the header.
    #[error("{file}, row {row}: {message}")]
    Row {
        file: String,
        row: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("word {0} is not in the lexicon")]
    UnknownWord(u32),

    #[error("word {0} does not occur in the corpus")]
    WordNotInCorpus(String),

    #[error("sentence {0} not found")]
    UnknownSentence(u32),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("training diverged at epoch {epoch}")]
    TrainDiverged { epoch: usize },

    #[error("input adaptation diverged on sentence {sentence} at step {step}")]
    FgrepDiverged { sentence: u32, step: usize },

    #[error("non-finite value in forward pass")]
    NonFinite,

    #[error("ensemble run {run} failed: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate range [{min}, {max}]")]
    DegenerateRange { min: f64, max: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn row(file: impl Into<String>, row: usize, message: impl Into<String>) -> Self {
        Error::Row {
            file: file.into(),
            row,
            message: message.into(),
        }
    }
}
