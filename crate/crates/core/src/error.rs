use thiserror::Error;

/// Errors raised anywhere in the discretization pipeline.
#[derive(Debug, Error)]
pub enum FemError {
    #[error("reference point {0:?} lies outside the closed reference simplex")]
    OutsideReference(Vec<f64>),

    #[error("unsupported element: dimension {dim}, degree {degree}")]
    UnsupportedElement { dim: usize, degree: usize },

    #[error("no quadrature rule for dimension {dim} with exactness {exactness} (max {max})")]
    UnsupportedQuadrature { dim: usize, exactness: usize, max: usize },

    #[error("h_target = {h} is outside the generator range ({min}, {max})")]
    MeshResolution { h: f64, min: f64, max: f64 },

    #[error("degenerate element {element}: det J = {det:e}")]
    DegenerateElement { element: usize, det: f64 },

    #[error("block split {split} out of range for a {n}x{n} matrix")]
    InvalidSplit { split: usize, n: usize },

    #[error("{role}: matrix is not symmetric positive definite")]
    NotSpd { role: String },

    #[error("{role}: relative residual {ratio:e} exceeds tolerance {tol:e}")]
    ResidualContract { role: String, ratio: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite field value at node {node} (t = {t})")]
    NonFinite { node: usize, t: f64 },

    #[error("BDF step count {0} not in 1..=4")]
    BdfOrder(usize),

    #[error("mesh degenerated at step {step}: {source}")]
    MeshDegenerated {
        step: usize,
        #[source]
        source: Box<FemError>,
    },

    #[error("negative quadratic form {value:e} (matrix is not positive semidefinite)")]
    NegativeQuadraticForm { value: f64 },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FemError>;
