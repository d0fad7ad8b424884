use thiserror::Error;

/// Errors raised by the discretization, solvers and capacity routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported discretization: {0}")]
    UnsupportedDiscretization(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("stencil of order {order} does not fit a lattice with {nodes} nodes per side")]
    StencilDoesNotFit { order: usize, nodes: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at node {0}")]
    NonFinite(usize),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations: {context}")]
    NonConvergence { iterations: usize, context: String },

    #[error("unsupported function class: {0}")]
    UnsupportedClass(String),

    #[error("eigen solver failure: {0}")]
    Eigen(String),

    #[error("constraint check failed: {0}")]
    ConstraintViolation(String),

    #[error("degenerate family: {0}")]
    DegenerateFamily(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
