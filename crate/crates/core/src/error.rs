use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented invariant (shapes, stochasticity, ranges).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("singular linear system")]
    Singular,

    #[error("eigensolver did not converge within {0} QR iterations")]
    EigenNoConvergence(usize),

    #[error("no period detected up to {0}")]
    NoPeriod(usize),

    #[error("enumeration budget exceeded: {required} paths required, budget is {budget}")]
    BudgetExceeded { required: f64, budget: f64 },

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
