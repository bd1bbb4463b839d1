use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("regularizer is not differentiable at this point: {0}")]
    NonDifferentiablePoint(String),

    #[error("regularizer kind `{0}` has no gradient")]
    NotDifferentiableKind(String),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("dimensions too small: need d >= 2n, got d = {d}, n = {n}")]
    DimsTooSmall { d: usize, n: usize },

    #[error("invalid regularizer spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("interpolation constraints are infeasible (least-squares residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("solver did not converge after {iterations} iterations (objective {objective:e})")]
    NotConverged { iterations: usize, objective: f64 },

    #[error("direction minimizer is not unique: {0}")]
    NotUnique(String),

    #[error("direction minimizer is zero; the limit construction needs a nonzero minimizer")]
    ZeroMinimizer,

    #[error("vectors have different norms ({left} vs {right})")]
    NormMismatch { left: f64, right: f64 },

    #[error("zero vector where a nonzero one is required")]
    ZeroVector,

    #[error("dimension {0} too small, need at least 2")]
    DimTooSmall(usize),

    #[error("matrix is not special orthogonal (orthogonality defect {orthogonality:e}, det {det})")]
    NotSpecialOrthogonal { orthogonality: f64, det: f64 },

    #[error("input columns are not orthonormal (defect {0:e})")]
    NotOrthonormalInput(f64),

    #[error("target vector is not orthogonal to the fixed singular frame (defect {0:e})")]
    NotOrthogonalToFrame(f64),

    #[error("matrix has rank zero")]
    RankZero,

    #[error("W^T P is not zero (norm {0:e})")]
    NotOrthogonal(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("data error: {0}")]
    Data(String),
}
