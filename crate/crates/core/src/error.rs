use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimMismatch { context: &'static str, expected: String, found: String },

    #[error("conjugate gradient breakdown at step {step}: non-positive curvature {curvature:e}")]
    Breakdown { step: usize, curvature: f64 },

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("weight matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),

    #[error("weight matrix is not contractive: rho = {rho}")]
    NotContractive { rho: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("divergence at iteration {iteration}: iterate norm {norm:e} exceeds guard")]
    Divergence { iteration: usize, norm: f64 },

    #[error("missing input: {0}")]
    MissingInput(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimMismatch { context, expected: expected.to_string(), found: found.to_string() }
    }
}
