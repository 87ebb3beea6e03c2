use thiserror::Error;

/// Errors produced by model construction, sampling and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `X' W^-1 X` is not positive definite for the active design.
    #[error("singular design: weighted Gram matrix is not positive definite")]
    SingularDesign,

    #[error("no recorded state has a finite log-posterior")]
    NoFiniteState,

    #[error(
        "noncrossing constraint infeasible: 0 of {total} sample pairs are ordered; more MCMC samples are required"
    )]
    ConstraintInfeasible { total: u64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
