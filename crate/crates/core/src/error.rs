use thiserror::Error;

/// Errors raised by stencil generation, assembly and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient neighbors: requested {requested}, only {available} available")]
    InsufficientNeighbors { requested: usize, available: usize },

    #[error("insufficient neighbors for point {index}: requested {requested}, only {available} available")]
    InsufficientNeighborsAt {
        index: usize,
        requested: usize,
        available: usize,
    },

    #[error("degenerate neighborhood: all neighbors coincide with the center")]
    DegenerateNeighborhood,

    #[error("singular ghost at center")]
    SingularGhost,

    #[error("degenerate frame at point {index}: neighbors are collinear or coincident")]
    DegenerateFrame { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("dense eigensolve of {size} x {size} exceeds the budget of {budget}; use a coarser dx")]
    EigenBudgetExceeded { size: usize, budget: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
