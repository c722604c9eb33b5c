use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// `log` was asked for a point on the cut locus of the base point.
    #[error("logarithm undefined: point lies on the cut locus")]
    CutLocus,
    #[error("degenerate simplex {simplex}: edge vectors have rank < {dim}")]
    DegenerateSimplex { simplex: usize, dim: usize },
    #[error("point is off the mesh (residual {residual:e})")]
    OffMesh { residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("halfspace intersection is infeasible")]
    Infeasible,
    #[error("active-set iteration cap reached ({0} iterations)")]
    IterationCap(usize),
    #[error("degenerate sample geometry for the convex hull")]
    DegenerateHull,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
