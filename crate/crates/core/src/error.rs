use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied values violate a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// A factorization or solve failed on otherwise valid input.
    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },

    /// The sampler aborted; carries the iteration and parameter that failed.
    #[error("sampler aborted at iteration {iteration} while updating {parameter}: {source}")]
    Sampler {
        iteration: usize,
        parameter: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_sampler(self, iteration: usize, parameter: impl Into<String>) -> Self {
        Error::Sampler {
            iteration,
            parameter: parameter.into(),
            source: Box::new(self),
        }
    }
}
