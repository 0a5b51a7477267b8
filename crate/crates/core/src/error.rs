use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid observation grid: {0}")]
    InvalidGrid(String),

    #[error("|z| = {0} is outside the unit disc")]
    Domain(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter {sigma:?} lies outside the closed parameter box")]
    OutsideBox { sigma: Vec<f64> },

    /// Cholesky pivot failure. `pivot` indexes the full `(l1 + l2)` ordering of `S`.
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("non-finite coefficient at t = {t}, x = {x:?}")]
    Simulation { t: f64, x: [f64; 2] },

    #[error("time {0} not found in merged grid")]
    Indexing(f64),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("information functions cover |z| < {available}, but sup |rho| = {required}")]
    Coverage { required: f64, available: f64 },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
