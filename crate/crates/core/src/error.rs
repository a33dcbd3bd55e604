use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty scene")]
    EmptyScene,

    #[error("no emitters")]
    NoEmitters,

    #[error("empty light list")]
    NoLights,

    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),

    #[error("rank exceeds dimensions: q = {rank}, matrix is {rows}x{cols}")]
    RankExceedsDimensions { rank: usize, rows: usize, cols: usize },

    #[error("diverged after {iterations} iterations")]
    Diverged { iterations: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("{}: {source}", path.display())]
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

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
