//! First-order finite elements on a triangulated range.
//!
//! Every simplex `T` with realised vertices `Z⁰…Zˢ` gets a frame: an `s × N`
//! matrix `P` with orthonormal rows spanning the edge directions, and the
//! local edge matrix `E = [P(Zᵏ − Z⁰)]ₖ` (columns). A nodal field `φ` is
//! affine on `T`; its local gradient is `E⁻ᵀ(φₖ − φ₀)ₖ` and its extrinsic
//! gradient is `Pᵀ` applied to that.

use crate::error::{Error, Result};
use crate::geometry::{ManifoldGeometry, Triangulation};
use crate::linalg::{invert, orthonormal_rows};
use crate::scalar::{dist_euclid, norm, Real};

/// Which frame a [`SimplexFrame`] was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameKind {
    /// Orthonormal basis of the simplex's edge directions.
    #[default]
    Orthonormal,
    /// Vertices mapped to the tangent space at the simplex midpoint by the
    /// logarithm; gradients measure change per geodesic length.
    LogMap,
}

/// Simplex-local coordinate system.
#[derive(Debug, Clone)]
pub struct SimplexFrame<T: Real> {
    pub kind: FrameKind,
    /// `s`.
    pub dim: usize,
    /// `N`.
    pub embed_dim: usize,
    /// `s × N`, orthonormal rows.
    pub p: Vec<T>,
    /// Origin of the local coordinates (the first realised vertex).
    pub origin: Vec<T>,
    /// `s × s` edge matrix; column `k−1` is the local position of `Zᵏ`.
    pub edges: Vec<T>,
    /// Inverse of `edges`.
    pub edges_inv: Vec<T>,
    /// Geodesic over Euclidean edge length for 1-D log-map frames, else 1.
    pub alpha: T,
    /// Log-map frames only: the midpoint `y_T` and `log_{y_T} Zᵏ`.
    pub base_point: Option<Vec<T>>,
    pub mapped_vertices: Option<Vec<Vec<T>>>,
}

impl<T: Real> SimplexFrame<T> {
    /// `P (z − origin)`.
    pub fn local_coords(&self, z: &[T]) -> Vec<T> {
        let (s, n) = (self.dim, self.embed_dim);
        (0..s)
            .map(|i| (0..n).map(|c| self.p[i * n + c] * (z[c] - self.origin[c])).sum())
            .collect()
    }

    /// Local gradient `E⁻ᵀ(vals[k] − vals[0])` from the `s + 1` vertex values.
    pub fn grad_local(&self, vals: &[T]) -> Vec<T> {
        let s = self.dim;
        (0..s)
            .map(|i| (0..s).map(|k| self.edges_inv[k * s + i] * (vals[k + 1] - vals[0])).sum())
            .collect()
    }

    /// Adjoint of [`SimplexFrame::grad_local`]: local covector to `s + 1`
    /// vertex values.
    pub fn grad_local_adjoint(&self, y: &[T]) -> Vec<T> {
        let s = self.dim;
        let mut out = vec![T::zero(); s + 1];
        for k in 0..s {
            let v: T = (0..s).map(|i| self.edges_inv[k * s + i] * y[i]).sum();
            out[k + 1] = v;
            out[0] -= v;
        }
        out
    }

    /// `Pᵀ g` for a local vector `g`.
    pub fn to_extrinsic(&self, g: &[T]) -> Vec<T> {
        let (s, n) = (self.dim, self.embed_dim);
        (0..n).map(|c| (0..s).map(|i| self.p[i * n + c] * g[i]).sum()).collect()
    }
}

fn degenerate(t: usize, s: usize) -> Error {
    Error::DegenerateSimplex { simplex: t, dim: s }
}

/// Orthonormal frame of simplex `t`.
pub fn simplex_frame<T: Real>(tri: &Triangulation<T>, t: usize) -> Result<SimplexFrame<T>> {
    let (s, n) = (tri.dim(), tri.embed_dim());
    let pts = tri.simplex_points(t);
    let origin = pts[0].clone();
    let diffs: Vec<T> = (1..=s).flat_map(|k| (0..n).map(move |c| (k, c))).map(|(k, c)| pts[k][c] - origin[c]).collect();
    let p = orthonormal_rows(&diffs, s, n, T::epsilon() * T::lit(1e3)).ok_or_else(|| degenerate(t, s))?;
    let mut edges = vec![T::zero(); s * s];
    for k in 0..s {
        for i in 0..s {
            edges[i * s + k] = (0..n).map(|c| p[i * n + c] * diffs[k * n + c]).sum();
        }
    }
    let edges_inv = invert(&edges, s, T::epsilon() * T::lit(1e3)).ok_or_else(|| degenerate(t, s))?;
    Ok(SimplexFrame {
        kind: FrameKind::Orthonormal,
        dim: s,
        embed_dim: n,
        p,
        origin,
        edges,
        edges_inv,
        alpha: T::one(),
        base_point: None,
        mapped_vertices: None,
    })
}

/// Log-map frame of simplex `t`.
///
/// Implemented for 1-D ranges (curves) and flat ranges; on flat ranges it
/// coincides with the orthonormal frame. Other ranges report
/// [`Error::Unsupported`].
pub fn logmap_frame<T: Real>(tri: &Triangulation<T>, t: usize) -> Result<SimplexFrame<T>> {
    let geo = tri.geometry();
    if let ManifoldGeometry::Flat { .. } = geo {
        let mut f = simplex_frame(tri, t)?;
        f.kind = FrameKind::LogMap;
        return Ok(f);
    }
    if tri.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "log-map frames need a 1-D or flat range, got dimension {} ({})",
            tri.dim(),
            geo.kind().name()
        )));
    }
    let pts = tri.simplex_points(t);
    let mid: Vec<T> = pts[0].iter().zip(&pts[1]).map(|(&a, &b)| (a + b) / T::lit(2.0)).collect();
    let y = geo.project(&mid);
    let v0 = geo.log(&y, &pts[0])?;
    let v1 = geo.log(&y, &pts[1])?;
    let dv: Vec<T> = v1.iter().zip(&v0).map(|(&a, &b)| a - b).collect();
    let len = norm(&dv);
    let chord = dist_euclid(&pts[0], &pts[1]);
    if len <= T::epsilon() * T::lit(1e3) || chord <= T::zero() {
        return Err(degenerate(t, 1));
    }
    let p: Vec<T> = dv.iter().map(|&x| x / len).collect();
    Ok(SimplexFrame {
        kind: FrameKind::LogMap,
        dim: 1,
        embed_dim: tri.embed_dim(),
        p,
        origin: pts[0].clone(),
        edges: vec![len],
        edges_inv: vec![T::one() / len],
        alpha: len / chord,
        base_point: Some(y),
        mapped_vertices: Some(vec![v0, v1]),
    })
}

/// Frames of every simplex.
pub fn frames<T: Real>(tri: &Triangulation<T>, kind: FrameKind) -> Result<Vec<SimplexFrame<T>>> {
    (0..tri.num_simplices())
        .map(|t| match kind {
            FrameKind::Orthonormal => simplex_frame(tri, t),
            FrameKind::LogMap => logmap_frame(tri, t),
        })
        .collect()
}

/// Extrinsic gradient (`N × d`, row-major) on simplex `t` of a nodal field
/// with `d` channels (`L × d`, row-major).
pub fn simplex_gradient<T: Real>(frame: &SimplexFrame<T>, tri: &Triangulation<T>, t: usize, nodal: &[T], d: usize) -> Vec<T> {
    let n = frame.embed_dim;
    let simplex = tri.simplex(t);
    let mut out = vec![T::zero(); n * d];
    for ch in 0..d {
        let vals: Vec<T> = simplex.iter().map(|&k| nodal[k * d + ch]).collect();
        let g = frame.to_extrinsic(&frame.grad_local(&vals));
        for c in 0..n {
            out[c * d + ch] = g[c];
        }
    }
    out
}

/// Affine representation `z ↦ ⟨q1, z⟩ + q2` of a scalar nodal field on simplex
/// `t`, with `q1` in the simplex's direction space.
pub fn affine_coeffs<T: Real>(frame: &SimplexFrame<T>, tri: &Triangulation<T>, t: usize, nodal: &[T]) -> (Vec<T>, T) {
    let vals: Vec<T> = tri.simplex(t).iter().map(|&k| nodal[k]).collect();
    let q1 = frame.to_extrinsic(&frame.grad_local(&vals));
    let q2 = vals[0] - q1.iter().zip(&frame.origin).map(|(&a, &b)| a * b).sum::<T>();
    (q1, q2)
}

/// Hat function `χ_k` evaluated at a point of `ℳ_h`.
pub fn nodal_basis_eval<T: Real>(tri: &Triangulation<T>, k: usize, z: &[T]) -> Result<T> {
    Ok(nodal_basis_all(tri, z)?[k])
}

/// All hat functions at a point of `ℳ_h`: the nodal coefficients of `z`.
pub fn nodal_basis_all<T: Real>(tri: &Triangulation<T>, z: &[T]) -> Result<Vec<T>> {
    let loc = tri.barycentric_locate(z);
    let tol = T::lit(1e-8).max(T::epsilon() * T::lit(1e4));
    if loc.residual > tol {
        return Err(Error::OffMesh { residual: loc.residual.to_f64_lossy() });
    }
    let mut out = vec![T::zero(); tri.num_vertices()];
    for (&v, &w) in tri.simplex(loc.simplex).iter().zip(&loc.weights) {
        out[v] += w;
    }
    Ok(out)
}
