//! Convex lifting of variational problems with values in low-dimensional
//! manifolds.
//!
//! The range `ℳ` is triangulated ([`geometry`]), functions on it are
//! represented by first-order finite elements ([`fem`]), and each pixel carries
//! a probability vector over the mesh vertices. The lifted problem is convex:
//! regularizers act through per-simplex gradients of nodal dual fields
//! ([`regularizer`]), data terms through per-simplex convex envelopes of
//! sampled costs ([`dataterm`]), and the saddle-point problem is solved by a
//! primal-dual method ([`solver`]). Solutions are mapped back to `ℳ` with a
//! Karcher-mean iteration ([`unlift`]).
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod dataterm;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod proxkit;
pub mod regularizer;
pub mod solver;
pub mod unlift;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Geometry = geometry::ManifoldGeometry<f64>;
pub type Mesh = geometry::Triangulation<f64>;
pub type Problem = solver::LiftedProblem<f64>;
pub type Options = solver::SolverOptions<f64>;
