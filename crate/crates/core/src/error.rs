//! Error type shared across the crate.
//!
//! Every error carries an [`ErrorKind`] so binaries can map failures onto
//! process exit codes without matching on individual variants: bad arguments
//! are usage errors, unusable corpora are data errors, and everything that
//! touches the filesystem is an I/O error.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid arguments or configuration (exit code 1).
    Usage,
    /// Input data that cannot be used (exit code 2).
    Data,
    /// Filesystem or file-format failures (exit code 3).
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("order must be at least 1")]
    InvalidOrder,

    #[error("count tables were built for order {counted} but estimation requested order {requested}")]
    OrderMismatch { counted: usize, requested: usize },

    #[error("fixed discount must lie strictly between 0 and 1, got {0}")]
    InvalidDiscount(f64),

    #[error("vocabulary size must be at least 4 (three ids are reserved), got {0}")]
    VocabTooSmall(usize),

    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("percentile must lie strictly between 0 and 100, got {0}")]
    InvalidPercentile(f64),

    #[error("empty {0} list")]
    EmptyList(&'static str),

    #[error("unknown score field `{0}`; expected ens, ppl-good, or ppl-bad")]
    UnknownScoreField(String),

    #[error("models disagree on tokenizer version (good {good}, bad {bad}); retrain with matching binaries")]
    TokenizerMismatch { good: u32, bad: u32 },

    #[error("worker count must be at least 1")]
    InvalidWorkers,

    #[error("mode `ensemble` needs a bad model; pass --bad or use mode `single_good`")]
    MissingBadModel,

    #[error("corpus contains no documents")]
    EmptyCorpus,

    #[error("n-gram counts are empty; nothing to estimate")]
    EmptyCounts,

    #[error("standardization needs at least 2 documents, got {0}")]
    InsufficientSamples(u64),

    #[error("column {0} has zero variance; scores cannot be standardized")]
    ZeroVariance(&'static str),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("record {id} is missing field {field}; was scoring run with a bad model?")]
    MissingField { id: String, field: &'static str },

    #[error("no documents meet the ground-truth threshold {0}; recall is undefined")]
    NoGroundTruth(f64),

    #[error("{malformed} of {lines} input lines malformed, above the {percent}% abort threshold")]
    TooManyMalformed { malformed: u64, lines: u64, percent: f64 },

    #[error("no input files match {0}")]
    NoInputs(String),

    #[error("{path}: line {line}: cannot parse score record")]
    BadScoreRecord { path: PathBuf, line: u64 },

    #[error("{path}: cannot parse stats file: {reason}")]
    BadStatsFile { path: PathBuf, reason: String },

    #[error("invalid glob pattern {pattern}: {reason}")]
    BadPattern { pattern: String, reason: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: not a model file: {reason}")]
    BadModelFile { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidOrder
            | OrderMismatch { .. }
            | InvalidDiscount(_)
            | VocabTooSmall(_)
            | InvalidAlpha(_)
            | InvalidPercentile(_)
            | EmptyList(_)
            | UnknownScoreField(_)
            | TokenizerMismatch { .. }
            | InvalidWorkers
            | MissingBadModel => ErrorKind::Usage,
            EmptyCorpus
            | EmptyCounts
            | InsufficientSamples(_)
            | ZeroVariance(_)
            | NonFinite { .. }
            | MissingField { .. }
            | NoGroundTruth(_)
            | TooManyMalformed { .. } => ErrorKind::Data,
            NoInputs(_)
            | BadPattern { .. }
            | BadScoreRecord { .. }
            | BadStatsFile { .. }
            | File { .. }
            | BadModelFile { .. }
            | Io(_)
            | ThreadPool(_) => ErrorKind::Io,
        }
    }

    /// Wraps an `io::Error` with the path it happened on.
    pub fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File { path: path.into(), source }
    }
}
