use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("{op}: shape mismatch between {}x{} and {}x{}", left.0, left.1, right.0, right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("probability {0} outside (0, 1]")]
    Probability(f64),
    #[error("objective is not finite when probing coordinate {coordinate}")]
    NonFiniteProbe { coordinate: usize },
}

#[derive(Debug, Error)]
pub enum CorpusError {
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
    #[error("relation schema: {0}")]
    Schema(String),
    #[error("{0}: no records")]
    Empty(String),
    #[error("dataset cache: {0}")]
    Cache(String),
}

impl CorpusError {
    pub(crate) fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        CorpusError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Failures in the encoder, aggregator, losses and training loop.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("{what}: index {index} out of bounds for table of {len} rows")]
    IndexOutOfBounds {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{what}: expected length {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("empty bag")]
    EmptyBag,
    #[error("empty label set")]
    EmptyLabels,
    #[error("no negative class: label set covers every relation")]
    NoNegative,
    #[error("relation id {0} out of range")]
    BadRelation(usize),
    #[error("regularizer needs at least one non-NR relation")]
    NoPositiveClasses,
    #[error("non-finite loss on bag {bag}")]
    NonFiniteLoss { bag: usize },
    #[error("parameters became non-finite in epoch {epoch}")]
    NonFiniteParameters { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("{what} hash mismatch: checkpoint {stored}, dataset {actual}")]
    HashMismatch {
        what: &'static str,
        stored: String,
        actual: String,
    },
    #[error("truncated checkpoint: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold fact set is empty")]
    EmptyGold,
    #[error("P@{n} requested but only {available} records are ranked")]
    NotEnoughRecords { n: usize, available: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}
