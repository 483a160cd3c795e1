use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("tau = {0} outside the Chebyshev domain [-1, 1]")]
    TauOutOfDomain(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("samples are not equispaced in time (max deviation {max_dev:.3e} s)")]
    NonEquispacedSamples { max_dev: f64 },

    #[error("evaluation time {t} s outside the sample span [{start}, {end}] s")]
    Extrapolation { t: f64, start: f64, end: f64 },

    #[error("least-squares fit failed: {0}")]
    FitFailed(String),

    #[error("problem assembly failed: {0}")]
    Assembly(String),

    #[error("solver diverged: {0}")]
    SolverDiverged(String),

    #[error("covariance matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("malformed data in {path} at row {row}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
