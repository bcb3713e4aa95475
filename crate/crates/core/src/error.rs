use thiserror::Error;

/// Errors raised by the lab's numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Inputs outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iteration (bisection, eigen-iteration) hit its cap.
    #[error("convergence error: {0}")]
    Convergence(String),

    /// Adaptive integrator step collapsed below the configured floor.
    #[error("step underflow at r = {r:e} (step {step:e} below minimum {min_step:e})")]
    StepUnderflow { r: f64, step: f64, min_step: f64 },

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    /// A profile was handed to an operation that requires a different classification.
    #[error("misclassified profile: {0}")]
    Misclassified(String),

    /// Shooting bracket endpoints do not exhibit opposite failure modes.
    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    /// Comparison of a profile with itself or with a constant multiple that leaves nothing to compare.
    #[error("degenerate comparison: {0}")]
    Degenerate(String),

    /// The discrete operator lost the positivity of its principal eigenvector.
    #[error("discretization error: {0}")]
    Discretization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
