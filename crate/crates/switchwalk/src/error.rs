use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the admissible range of the operator class.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A geometric argument is outside its domain (point outside ball,
    /// coincident points, zero vector, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A coefficient field returned a non-finite value.
    #[error("coefficient evaluation failed: field `{field}` at {location}")]
    CoefficientEval { field: String, location: String },

    /// Quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: residual {residual:.3e} > tolerance {tolerance:.3e}")]
    QuadratureResidual { residual: f64, tolerance: f64 },

    /// A combinatorial guard was exceeded (path enumeration blow-up).
    #[error("enumeration guard exceeded: {0}")]
    Guard(String),

    /// A series precondition fails and the sum may diverge.
    #[error("divergence risk: {0}")]
    Divergence(String),

    /// The sampled coefficients breach a condition of the operator class
    /// during simulation (envelope violation, bad redistribution row).
    #[error("coefficient condition breach: {0}")]
    ConditionBreach(String),

    /// A preset was asked for something it does not support.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Scenario configuration problem (parse or semantic).
    #[error("config error: {0}")]
    Config(String),

    /// Class validation failed and the scenario did not override it.
    #[error("operator class validation failed: {0}")]
    ValidationFailed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
