use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classification used by the command line front end for exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Data(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("prior is improper: {0}")]
    ImproperPrior(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::ImproperPrior(_) => ErrorKind::Usage,
            Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorKind::Data,
            Error::NotPositiveDefinite(_) | Error::Numerical(_) => ErrorKind::Numeric,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn not_pd(msg: impl Into<String>) -> Self {
        Error::NotPositiveDefinite(msg.into())
    }
}
