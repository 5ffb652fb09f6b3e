use std::path::PathBuf;

/// Errors produced by the economy model, solvers, learner and harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input lies outside the domain of a function (e.g. an allocation
    /// coordinate outside `[0, 1]`).
    #[error("domain error: {0}")]
    Domain(String),

    /// An economy definition violates one of its invariants.
    #[error("invalid economy: {0}")]
    InvalidEconomy(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An experiment configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
