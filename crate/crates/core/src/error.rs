use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the network models, solvers and optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what} = {index} (valid 0..{bound})")]
    IndexRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular cell block at cell {cell} (|det| = {det:.3e})")]
    SingularCell { cell: usize, det: f64 },

    #[error("linear solve failed: condition estimate {condition:.3e} exceeds cap {cap:.1e}")]
    IllConditioned { condition: f64, cap: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("block-Thomas factorization failed at block {block} (rcond {rcond:.3e})")]
    Factorization { block: usize, rcond: f64 },

    #[error("derivative with respect to the cell state is not available for {0}")]
    UnsupportedDerivative(&'static str),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
