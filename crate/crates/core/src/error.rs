use thiserror::Error;

/// Failures raised by grid construction, solvers and experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("time step too large: dt * max|a_ij| = {product} (must stay below 0.5)")]
    StepTooLarge { product: f64 },

    #[error("singular block encountered at cell {cell} while factorizing the step operator")]
    SingularStep { cell: usize },

    #[error("inner fixed-point iteration failed at step {step}: residual {residual:e} after {iterations} iterations")]
    InnerNonConvergence {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("reaction terms violate the contraction bound: dt * max(C_f, C_g) = {product} >= 1")]
    NoContraction { product: f64 },

    #[error("non-finite value produced at time step {step}")]
    NonFinite { step: usize },

    #[error("eta0 construction failed: {0}")]
    Eta0(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
