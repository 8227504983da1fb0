use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation and forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A basis function was evaluated outside its domain (e.g. `log` of a non-positive value).
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("infeasible parameter set: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    /// Bad command-line usage or configuration, detected before any work starts.
    #[error("usage: {0}")]
    Usage(String),
    #[error("missing input file: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Dimension(_) => "dimension",
            Error::Invalid(_) => "invalid",
            Error::Empty(_) => "empty",
            Error::Infeasible(_) => "infeasible",
            Error::Numerical(_) => "numerical",
            Error::NotConverged(_) => "not_converged",
            Error::Usage(_) => "usage",
            Error::MissingInput(_) => "missing_input",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    /// True for errors caused by how the program was invoked rather than by the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Usage(_) | Error::MissingInput(_))
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
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
