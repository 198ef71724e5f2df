use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("column {0} has zero variance")]
    ConstantColumn(usize),

    #[error("need at least 3 timepoints, got {0}")]
    TooFewTimepoints(usize),

    #[error("scalar subproblem has no data targets")]
    EmptyTargets,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("forward cache does not match the network parameters")]
    StaleCache,

    #[error("index {index} out of range for size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("exhaustive search supports at most 20 nodes, got {0}")]
    TooLarge(usize),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("group {group} has {size} subjects, need at least 3 to split")]
    GroupTooSmall { group: usize, size: usize },

    #[error("evaluated slice contains a single class")]
    SingleClassSlice,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("subject {id}: {source}")]
    Subject {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures caused by non-finite arithmetic rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite(_) => true,
            Error::Subject { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
