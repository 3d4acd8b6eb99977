use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed delimited text at row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("event table needs at least 3 columns, found {0}")]
    TooFewColumns(usize),

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("invalid column mapping: {0}")]
    Mapping(String),

    #[error("invalid synthetic log spec: {0}")]
    SynthSpec(String),

    #[error("threshold {0} is outside [0, 1]")]
    Threshold(f64),

    #[error("utility ratio {0} is outside [0, 1]")]
    UtilityRatio(f64),

    #[error("trace is empty")]
    EmptyTrace,

    #[error("invalid action space: {0}")]
    ActionSpace(String),

    #[error("unknown {kind} {value:?}")]
    UnknownMode { kind: &'static str, value: String },

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(usize),

    #[error("index {index} out of range for {len} actions")]
    ActionIndex { index: usize, len: usize },

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),

    #[error("DOT parse error on line {line}: {message}")]
    Dot { line: usize, message: String },

    #[error("config error for key {key:?}: {message}")]
    Config { key: String, message: String },

    #[error("config syntax error on line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
