//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by geometric evaluations, solvers and pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point was evaluated outside the domain where the structure is defined.
    #[error("domain violation: {0}")]
    Domain(String),

    /// A frame or form argument had the wrong number of vectors or components.
    #[error("degree mismatch: expected {expected}, got {got}")]
    Degree { expected: usize, got: usize },

    /// A frame that should span a Lagrangian plane does not.
    #[error("frame is not Lagrangian (omega residual {residual:.3e})")]
    NotLagrangian { residual: f64 },

    /// A sampled tangent plane has phase outside (-pi/2, pi/2).
    #[error("positivity failure: phase {phase:.6} at sample {index}")]
    Positivity { phase: f64, index: usize },

    /// A Hamiltonian flow left the tubular chart it is defined in.
    #[error("flow left the chart: {0}")]
    ChartOverflow(String),

    /// An element's pullback metric is singular or indefinite.
    #[error("degenerate element {element} (det {det:.3e})")]
    DegenerateElement { element: usize, det: f64 },

    /// A linear solve failed.
    #[error("linear solver breakdown: {0}")]
    Solver(String),

    /// Newton iteration failed to reduce the residual.
    #[error("newton divergence after {iterations} iterations (residual {residual:.3e})")]
    Divergence { iterations: usize, residual: f64 },

    /// A Newton refinement of a point or parameter did not converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A level requested from a Hamiltonian is critical or outside its range.
    #[error("level {level} rejected: {reason}")]
    Level { level: f64, reason: String },

    /// An input violated an operation precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A family or path failed a regularity check needed by the operation.
    #[error("regularity failure: {0}")]
    Regularity(String),
}

/// Shorthand result type.
pub type Result<T> = std::result::Result<T, Error>;
