use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("input error: {0}")]
    Input(String),

    /// Misuse of the differentiation trace (non-scalar root, stale trace, foreign handle).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("format error on line {line}: {msg}")]
    FormatLine { line: u64, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing upstream artifact: {}", .0.display())]
    Dependency(PathBuf),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
