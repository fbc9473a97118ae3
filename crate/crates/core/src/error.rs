use thiserror::Error;

use crate::grid::Field;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid extent on axis {axis}: hi ({hi}) must exceed lo ({lo})")]
    InvalidExtent { axis: usize, lo: f64, hi: f64 },

    #[error("grid too coarse on axis {axis}: {n} nodes, need at least 3")]
    TooCoarse { axis: usize, n: usize },

    #[error("unsupported grid dimension {0}, expected 1 or 2")]
    UnsupportedDimension(usize),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field has {got} values, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at node {0}")]
    NonFinite(usize),

    #[error("singular operator: zero pivot at row {0}")]
    SingularOperator(usize),

    #[error("infeasible layout: {0}")]
    InfeasibleLayout(String),

    #[error("partition of unity leaves node {0} uncovered")]
    UncoveredNode(usize),

    #[error("invalid vector field: {0}")]
    InvalidVectorField(String),

    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),

    #[error("step size {h} violates h < 1/M with M = {m}")]
    StepTooLarge { h: f64, m: f64 },

    #[error("resolvent solve did not converge: residual {residual:.3e} > target {target:.3e}")]
    NonConvergence {
        residual: f64,
        target: f64,
        best: Box<Field>,
    },

    #[error("step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid Barenblatt parameters: {0}")]
    InvalidParams(String),

    #[error("reference unavailable: {0}")]
    ReferenceUnavailable(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
