use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An SVD or eigendecomposition did not converge.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// An input violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Two rank jumps were detected closer than the configured minimum gap.
    #[error(
        "scan resolution error: jumps at {first} and {second} are closer than lambda_min_gap = {gap}"
    )]
    Resolution { first: f64, second: f64, gap: f64 },

    /// A modelling assumption (monotonicity, bounded spectrum) failed a check.
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// Two counting methods returned different totals in verification mode.
    #[error("counting methods disagree:\n{0}")]
    Disagreement(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
