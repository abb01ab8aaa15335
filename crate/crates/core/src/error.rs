use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    /// A row (0-based data row index) failed validation.
    #[error("validation error at row {row}: {msg}")]
    Row { row: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error ({learner}): {msg}")]
    Fit { learner: String, msg: String },

    #[error("{learner} did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence {
        learner: String,
        iterations: usize,
        grad_norm: f64,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn fit(learner: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Fit {
            learner: learner.into(),
            msg: msg.into(),
        }
    }
}
