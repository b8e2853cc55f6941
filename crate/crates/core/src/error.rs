use thiserror::Error;

/// Errors raised by the synthesis toolkit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SlsError {
    /// Matrix or mask dimensions do not conform.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A chain plant was requested without any actuator.
    #[error("no actuation: actuator set is empty")]
    NoActuation,

    /// The response does not satisfy the achievability constraints.
    #[error("response not achievable (residual {residual:.3e})")]
    NotAchievable { residual: f64 },

    /// A documented precondition on the inputs was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The Riccati recursion did not reach a stabilizing fixed point.
    #[error("no stabilizing solution: {0}")]
    NoStabilizingSolution(String),

    /// The problem exceeds the configured dense-solve budget.
    #[error("problem too large: {variables} variables exceeds budget {budget}")]
    TooLarge { variables: usize, budget: usize },

    /// The requested combination of options is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, SlsError>;

pub(crate) fn check_dims(what: &str, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(SlsError::Dimension(format!(
            "{what}: expected {}x{}, got {}x{}",
            want.0, want.1, got.0, got.1
        )));
    }
    Ok(())
}
