use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed container {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("byte-count mismatch in {}: expected {expected} bytes, found {found}", path.display())]
    ByteCount {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate samples: {0}")]
    Degenerate(String),
    #[error("step-size/relaxation conditions violated: {0}")]
    Assumption(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("config error{}: {field}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        msg: String,
    },
    #[error("empty constraint set at pixel ({y}, {x})")]
    EmptyConstraint { y: usize, x: usize },
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
}
