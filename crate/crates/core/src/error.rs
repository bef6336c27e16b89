use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("dangling reference in {entity}: `{reference}` is not defined")]
    DanglingReference { entity: String, reference: String },

    #[error("invariant violated by {entity}: {reason}")]
    Invariant { entity: String, reason: String },

    #[error("no link declared between `{0}` and `{1}`")]
    UndeclaredLink(String, String),

    #[error("nonpositive compute power: {0}")]
    NonPositiveCompute(f64),

    #[error("user `{0}` is unreachable (zero effective bandwidth)")]
    Unreachable(String),

    #[error("zero effective bandwidth")]
    ZeroBandwidth,

    #[error("prediction time {requested} s lies before current time {now} s")]
    PastPrediction { requested: f64, now: f64 },

    #[error("user `{0}` has no feasible placement candidate")]
    NoCandidate(String),

    #[error("instance too large for exhaustive search ({0} combinations)")]
    InstanceTooLarge(u128),

    #[error("server `{server}` lacks capacity for container of `{user}`")]
    Capacity { server: String, user: String },

    #[error("container of `{0}` is not running")]
    NotRunning(String),

    #[error("protocol order violated for `{user}`: {reason}")]
    ProtocolOrder { user: String, reason: String },

    #[error("no completed requests to summarize")]
    EmptyMetrics,

    #[error("nothing to summarize")]
    EmptyInput,

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the scenario or invocation rather than the run itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::DanglingReference { .. }
                | Error::Invariant { .. }
                | Error::UndeclaredLink(..)
                | Error::NonPositiveCompute(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
