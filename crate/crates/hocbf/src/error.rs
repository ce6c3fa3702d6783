use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's contract
    /// (non-finite input, non-positive gain, malformed shape, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Two trajectories that must share a time grid do not.
    #[error("time grid mismatch: {left} vs {right} samples")]
    GridMismatch { left: usize, right: usize },

    /// A check was invoked on data that fails its hypothesis; the check
    /// makes no claim rather than reporting a result.
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    /// The half-space constraint degenerated to `0 * u + c >= 0` with
    /// `c < 0`: no input can satisfy it at this state.
    #[error("constraint infeasible at state: zero input gradient with offset {offset}")]
    InfeasibleAtState { offset: f64 },

    /// The integrated state left the guarded region.
    #[error("state diverged at t = {t}: |x| = {norm}")]
    Diverged { t: f64, norm: f64 },

    /// A NaN or infinity appeared while propagating or serializing data.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A field selector names no logged quantity.
    #[error("unknown field selector: {0}")]
    UnknownField(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
