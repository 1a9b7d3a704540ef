use thiserror::Error;

/// Failures surfaced by the geometry and comparison routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid manifold spec: {0}")]
    InvalidSpec(String),
    #[error("{0} is not embedded")]
    NotEmbedded(String),
    #[error("point is off the manifold (defining residual {0:e})")]
    OffManifold(f64),
    #[error("vector is not tangent (normal component {0:e})")]
    NotTangent(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate plane (gram determinant {0:e})")]
    DegeneratePlane(f64),
    #[error("initial velocity must have unit length, got norm {0}")]
    NonUnitVelocity(f64),
    #[error("parameter {value} out of range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("no certified minimizer; best upper bound {best_upper_bound}")]
    NoCertifiedMinimizer { best_upper_bound: f64 },
    #[error("continuation failed at parameter {0}")]
    ContinuationFailed(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;
