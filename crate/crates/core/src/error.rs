use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The conditional state after this action-observation pair is undefined.
    #[error("impossible observation: p({step} | h) = {probability:e} is at or below the zero cutoff")]
    ImpossibleObservation { step: String, probability: f64 },

    /// A model file or in-memory parameter set broke one of its invariants.
    /// `path` locates the offending field, e.g. `T.f[2]`.
    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("cannot parse sequence {input:?}: {message}")]
    Parse { input: String, message: String },

    #[error("span violation for test {test}: residual {residual:e} exceeds {bound:e}")]
    SpanViolation { test: String, residual: f64, bound: f64 },

    #[error("invalid core-test override: {0}")]
    InvalidOverride(String),

    #[error("matrix too shallow: column {0} is beyond the test depth")]
    DepthInsufficient(String),

    #[error("budget of {budget} entries exhausted at depths ({hist_depth}, {test_depth}) before the rank plateaued")]
    BudgetExhausted {
        budget: usize,
        hist_depth: usize,
        test_depth: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
