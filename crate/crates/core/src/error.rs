use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated an operation's precondition (dimensions, ranges, time windows).
    #[error("usage error: {0}")]
    Usage(String),

    /// A configuration value violated a type invariant.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("cholesky factorization failed: matrix not numerically positive definite (lambda = {lambda})")]
    NotPositiveDefinite { lambda: f64 },

    #[error("posterior variance {value} is negative beyond round-off at {point:?}")]
    NegativeVariance { value: f64, point: Vec<f64> },

    #[error("simulation diverged at t = {time:.3} for d = {d:?}, seed = {seed}")]
    Divergence { d: Vec<f64>, seed: u64, time: f64 },

    #[error("objective evaluation failed at iteration {iteration}: {source}")]
    Objective {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot compose risk bound: {0}")]
    Composition(String),

    #[error("spec parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("journal: {0}")]
    Journal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(std::io::Error::other(e))
    }
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}
