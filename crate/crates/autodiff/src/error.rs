use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    /// Incompatible shapes for an operation.
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The tape was used after it was consumed.
    #[error("tape state error: {0}")]
    State(String),

    /// Two evaluations of the same function at the same point disagreed.
    #[error("non-deterministic function: evaluations differ by {difference:e}")]
    Determinism { difference: f64 },
}

impl TensorError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Dimension {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;
