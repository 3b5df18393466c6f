use thiserror::Error;

/// Errors raised by the numerical library.
#[derive(Debug, Error)]
pub enum Error {
    /// Graph dimension or fractional order outside the supported domain.
    #[error("parameter out of domain: {0}")]
    Parameter(String),

    /// Malformed geometry or field data (window, spacing, values, seam).
    #[error("invalid field: {0}")]
    Field(String),

    /// The evaluation point or set violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested tail budget needs a far radius beyond the allowed cap.
    #[error("tail budget {budget:e} unattainable: requires far radius {required_far_radius:e}")]
    Budget { budget: f64, required_far_radius: f64 },

    /// Resolution too coarse for the requested accuracy.
    #[error("resolution too coarse: {0}")]
    Resolution(String),

    /// The gradient flow could not decrease the energy.
    #[error("step failure at iteration {iteration}: {reason}")]
    StepFailure { iteration: usize, reason: String },

    #[error("serialization: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
