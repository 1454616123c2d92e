use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyData(String),

    #[error("marginal cache is stale (cache revision {cache}, state revision {state})")]
    StaleCache { cache: u64, state: u64 },

    #[error("V_n series for t = {t} did not converge within {terms} terms")]
    SeriesNotConverged { t: usize, terms: usize },

    #[error("iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the error's category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Parse { .. } | Error::Config(_) => 4,
            Error::DimensionMismatch(_) | Error::InvalidParameter(_) | Error::EmptyData(_) => 5,
            Error::NotPositiveDefinite(_)
            | Error::SeriesNotConverged { .. }
            | Error::StaleCache { .. } => 6,
            Error::Chain { source, .. } => source.exit_code(),
        }
    }
}
