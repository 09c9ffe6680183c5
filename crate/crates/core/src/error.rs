use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A simulated state left the representable range (|h| > 1e100 or NaN).
    #[error("state overflow at time step {step}")]
    Overflow { step: usize },

    #[error("Jacobian needs {requested} elements but the budget is {budget}; use the matrix-free jvp/vjp operators")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("fixed-point spec rejected: {0}")]
    FixedPoints(String),

    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
