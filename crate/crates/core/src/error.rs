use std::path::PathBuf;

/// Broad failure class, used by the command-line front end to pick an exit
/// code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    /// 2 config error, 3 data error, 4 numerical abort.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape for {op}: {detail}")]
    InvalidShape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value detected in {0}")]
    NonFinite(&'static str),

    #[error("{layer} backward called without a matching train-mode forward")]
    MissingCache { layer: &'static str },

    #[error("cannot parse file name {name:?}: bad {segment} segment ({detail})")]
    FileName {
        name: String,
        segment: &'static str,
        detail: String,
    },

    #[error("no samples found under {0}")]
    EmptyCorpus(PathBuf),

    #[error("empty record set: {0}")]
    Empty(&'static str),

    #[error("invalid index: {0}")]
    Index(String),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("bad magic")]
    BadMagic,

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("non-finite loss or gradient at epoch {epoch}, batch {batch} (learning rate {learning_rate}, loss {loss})")]
    NumericalAbort {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
        loss: f64,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::NumericalAbort { .. } | Error::NonFinite(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
