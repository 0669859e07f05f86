use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("invalid input: {0}")]
    Input(String),

    /// A valid input used in an invalid way, e.g. stepping out of a terminal state.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("least-squares system is rank deficient; use ridge > 0")]
    RankDeficient,

    #[error(
        "no feature for state {state}, action {action}: token never seen during meta-training"
    )]
    MissingFeature { state: usize, action: usize },

    #[error("training diverged: non-finite loss at update {update}")]
    Divergence { update: usize },

    #[error("internal numerical failure: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code: 1 for input problems, 2 for convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Convergence { .. } | Error::Divergence { .. } | Error::RankDeficient => 2,
            _ => 1,
        }
    }
}
