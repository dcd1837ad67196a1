use thiserror::Error;

/// Errors raised by grid construction, body validation and flow stepping.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported sphere dimension {0} (only n = 1 and n = 2 are implemented)")]
    UnsupportedDimension(usize),

    #[error("invalid grid resolution: {0}")]
    InvalidResolution(String),

    #[error("antipodal symmetry broken: {0}")]
    AntipodalSymmetry(String),

    #[error("field has {got} values but the grid has {expected} nodes")]
    FieldLength { expected: usize, got: usize },

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("support function is not positive at node {node} (s = {value:e}); origin is not interior")]
    NonPositiveSupport { node: usize, value: f64 },

    #[error("strict convexity lost at node {node}: radius of curvature {eigenvalue:e} below floor {floor:e}")]
    NonConvex { node: usize, eigenvalue: f64, floor: f64 },

    #[error("body is not origin-symmetric: max |s(z) - s(-z)| = {0:e}")]
    NotSymmetric(f64),

    #[error("singular linear map (|det| = {0:e})")]
    SingularMatrix(f64),

    #[error("matrix has shape {rows}x{cols}, expected {expected}x{expected}")]
    MatrixShape { rows: usize, cols: usize, expected: usize },

    #[error("radial minimisation failed in direction index {node} after {iterations} iterations")]
    RadialSolve { node: usize, iterations: usize },

    #[error("ellipsoid fit did not converge after {iterations} iterations (residual {residual:e})")]
    MveeNoConvergence { iterations: usize, residual: f64 },

    #[error("point set does not span the ambient space")]
    DegenerateSpan,

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("step failed at node {node}: {reason}; retry with dt <= {suggested_dt:e}")]
    StepFailed {
        node: usize,
        reason: String,
        suggested_dt: f64,
    },

    #[error("time {t} is at or after extinction time {extinction}")]
    PastExtinction { t: f64, extinction: f64 },

    #[error("states live on different grids or flows")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series is empty")]
    EmptySeries,
}

pub type Result<T> = std::result::Result<T, Error>;
