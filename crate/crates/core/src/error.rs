use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported material `{0}`: conductors have no propagation constants")]
    UnsupportedMaterial(String),

    #[error("invalid distance {0} m: must be positive")]
    InvalidDistance(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid antenna pattern: {0}")]
    InvalidPattern(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("cell ({x_mm:.6} mm, {y_mm:.6} mm): {source}")]
    Cell {
        x_mm: f64,
        y_mm: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("comparison has no overlapping cells")]
    EmptyComparison,

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalFailure(_) => 2,
            Error::Cell { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
