use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] ctdc_core::Error),
    #[error("optimizer failed to converge: {0}")]
    NotConverged(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) | Error::NotConverged(_) => 3,
            Error::Data(_) => 4,
            Error::Output { .. } => 1,
        }
    }

    pub(crate) fn config(e: impl std::fmt::Display) -> Self {
        Error::Config(e.to_string())
    }

    pub(crate) fn data(e: impl std::fmt::Display) -> Self {
        Error::Data(e.to_string())
    }
}
