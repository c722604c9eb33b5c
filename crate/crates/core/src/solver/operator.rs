//! The coupling operator `K` of the saddle-point problem.
//!
//! Variables are packed per pixel. Primal block: `v (L) | X (|T|·s·d) |
//! Y (|T|·s) | m (|T|)`; dual block: `p (L·d) | q (L) | G (|T|·s·d) |
//! a (|T|) | g (|T|·s) | b (|T|)`. With `D_T` the local gradient on simplex
//! `T` (an `s × (s+1)` matrix acting on the simplex's vertex values):
//!
//! ```text
//! p = ∇ₓv − Σ_T D_Tᵀ X_T        G_T = X_T     a_T = −m_T
//! q = v − Σ_T (D_Tᵀ Y_T + m_T e_{T₀})     g_T = Y_T     b_T = −m_T
//! ```
//!
//! The label-resolution TV model keeps only `v, X` and `p, G`.

use rayon::prelude::*;

use super::grid::Grid;
use crate::fem::SimplexFrame;
use crate::geometry::Triangulation;
use crate::scalar::Real;

/// Offsets of the packed per-pixel blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub labels: usize,
    pub simplices: usize,
    pub s: usize,
    pub d: usize,
    /// Whether the data-term variables `Y, m, q, a, g, b` exist.
    pub sublabel: bool,
    pub v: usize,
    pub xg: usize,
    pub y: usize,
    pub m: usize,
    pub primal_block: usize,
    pub p: usize,
    pub q: usize,
    pub gg: usize,
    pub a: usize,
    pub g: usize,
    pub b: usize,
    pub dual_block: usize,
}

impl Layout {
    pub fn new(labels: usize, simplices: usize, s: usize, d: usize, sublabel: bool) -> Self {
        let on = |n: usize| if sublabel { n } else { 0 };
        let sd = s * d;
        let v = 0;
        let xg = v + labels;
        let y = xg + simplices * sd;
        let m = y + on(simplices * s);
        let primal_block = m + on(simplices);
        let p = 0;
        let q = p + labels * d;
        let gg = q + on(labels);
        let a = gg + simplices * sd;
        let g = a + on(simplices);
        let b = g + on(simplices * s);
        let dual_block = b + on(simplices);
        Layout { labels, simplices, s, d, sublabel, v, xg, y, m, primal_block, p, q, gg, a, g, b, dual_block }
    }
}

/// `K` together with its adjoint; `abs` variants apply `|K|` entrywise.
#[derive(Debug, Clone)]
pub struct Operator<T> {
    pub grid: Grid,
    pub layout: Layout,
    simplices: Vec<Vec<usize>>,
    /// Per simplex, `s × (s+1)` row-major.
    dmat: Vec<Vec<T>>,
    dmat_abs: Vec<Vec<T>>,
}

/// `D_T` as an `s × (s+1)` matrix: `(D_T φ)_i = Σ_k E⁻¹_{k,i} (φ_{k+1} − φ₀)`.
pub fn local_gradient_matrix<T: Real>(frame: &SimplexFrame<T>) -> Vec<T> {
    let s = frame.dim;
    let mut out = vec![T::zero(); s * (s + 1)];
    for i in 0..s {
        for k in 0..s {
            let e = frame.edges_inv[k * s + i];
            out[i * (s + 1) + k + 1] = e;
            out[i * (s + 1)] -= e;
        }
    }
    out
}

impl<T: Real> Operator<T> {
    pub fn new(grid: Grid, tri: &Triangulation<T>, frames: &[SimplexFrame<T>], sublabel: bool) -> Self {
        let layout = Layout::new(tri.num_vertices(), tri.num_simplices(), tri.dim(), grid.dim(), sublabel);
        let dmat: Vec<Vec<T>> = frames.iter().map(local_gradient_matrix).collect();
        let dmat_abs = dmat.iter().map(|m| m.iter().map(|v| v.abs()).collect()).collect();
        Operator { grid, layout, simplices: tri.simplices().to_vec(), dmat, dmat_abs }
    }

    pub fn primal_len(&self) -> usize {
        self.grid.num_pixels() * self.layout.primal_block
    }

    pub fn dual_len(&self) -> usize {
        self.grid.num_pixels() * self.layout.dual_block
    }

    pub fn simplex(&self, t: usize) -> &[usize] {
        &self.simplices[t]
    }

    pub fn dmat(&self, t: usize) -> &[T] {
        &self.dmat[t]
    }

    /// `D_T` applied to nodal values `vals[k * stride + offset]`.
    pub fn local_grad(&self, t: usize, vals: &[T], stride: usize, offset: usize, out: &mut [T]) {
        let s = self.layout.s;
        let dm = &self.dmat[t];
        let verts = &self.simplices[t];
        for i in 0..s {
            out[i] = (0..=s).map(|j| dm[i * (s + 1) + j] * vals[verts[j] * stride + offset]).sum();
        }
    }

    /// `out = K x` (or `|K| x`).
    pub fn apply(&self, x: &[T], out: &mut [T], abs: bool) {
        let lay = &self.layout;
        out.par_chunks_mut(lay.dual_block).enumerate().for_each(|(px, o)| self.apply_pixel(px, x, o, abs));
    }

    /// `out = Kᵀ y` (or `|K|ᵀ y`).
    pub fn apply_adjoint(&self, y: &[T], out: &mut [T], abs: bool) {
        let lay = &self.layout;
        out.par_chunks_mut(lay.primal_block).enumerate().for_each(|(px, o)| self.adjoint_pixel(px, y, o, abs));
    }

    fn apply_pixel(&self, px: usize, x: &[T], o: &mut [T], abs: bool) {
        let lay = &self.layout;
        let (l, nt, s, d) = (lay.labels, lay.simplices, lay.s, lay.d);
        let neg = if abs { T::one() } else { -T::one() };
        let xb = &x[px * lay.primal_block..(px + 1) * lay.primal_block];
        o.fill(T::zero());
        for axis in 0..d {
            if let Some(nb) = self.grid.forward(px, axis) {
                let xn = &x[nb * lay.primal_block..];
                for k in 0..l {
                    o[lay.p + k * d + axis] = xn[lay.v + k] + neg * xb[lay.v + k];
                }
            }
        }
        let dms = if abs { &self.dmat_abs } else { &self.dmat };
        for t in 0..nt {
            let dm = &dms[t];
            let verts = &self.simplices[t];
            let xt = &xb[lay.xg + t * s * d..];
            for c in 0..d {
                for (j, &k) in verts.iter().enumerate() {
                    let acc: T = (0..s).map(|i| dm[i * (s + 1) + j] * xt[i * d + c]).sum();
                    o[lay.p + k * d + c] += neg * acc;
                }
            }
            o[lay.gg + t * s * d..lay.gg + (t + 1) * s * d].copy_from_slice(&xt[..s * d]);
            if lay.sublabel {
                let yt = &xb[lay.y + t * s..lay.y + (t + 1) * s];
                for (j, &k) in verts.iter().enumerate() {
                    let acc: T = (0..s).map(|i| dm[i * (s + 1) + j] * yt[i]).sum();
                    o[lay.q + k] += neg * acc;
                }
                let m = xb[lay.m + t];
                o[lay.q + verts[0]] += neg * m;
                o[lay.g + t * s..lay.g + (t + 1) * s].copy_from_slice(yt);
                o[lay.a + t] = neg * m;
                o[lay.b + t] = neg * m;
            }
        }
        if lay.sublabel {
            for k in 0..l {
                o[lay.q + k] += xb[lay.v + k];
            }
        }
    }

    fn adjoint_pixel(&self, px: usize, y: &[T], o: &mut [T], abs: bool) {
        let lay = &self.layout;
        let (l, nt, s, d) = (lay.labels, lay.simplices, lay.s, lay.d);
        let neg = if abs { T::one() } else { -T::one() };
        let yb = &y[px * lay.dual_block..(px + 1) * lay.dual_block];
        o.fill(T::zero());
        for axis in 0..d {
            if self.grid.forward(px, axis).is_some() {
                for k in 0..l {
                    o[lay.v + k] += neg * yb[lay.p + k * d + axis];
                }
            }
            if let Some(nb) = self.grid.backward(px, axis) {
                let yn = &y[nb * lay.dual_block..];
                for k in 0..l {
                    o[lay.v + k] += yn[lay.p + k * d + axis];
                }
            }
        }
        if lay.sublabel {
            for k in 0..l {
                o[lay.v + k] += yb[lay.q + k];
            }
        }
        let dms = if abs { &self.dmat_abs } else { &self.dmat };
        for t in 0..nt {
            let dm = &dms[t];
            let verts = &self.simplices[t];
            for i in 0..s {
                for c in 0..d {
                    let acc: T = (0..=s).map(|j| dm[i * (s + 1) + j] * yb[lay.p + verts[j] * d + c]).sum();
                    o[lay.xg + (t * s + i) * d + c] = yb[lay.gg + (t * s + i) * d + c] + neg * acc;
                }
            }
            if lay.sublabel {
                for i in 0..s {
                    let acc: T = (0..=s).map(|j| dm[i * (s + 1) + j] * yb[lay.q + verts[j]]).sum();
                    o[lay.y + t * s + i] = yb[lay.g + t * s + i] + neg * acc;
                }
                o[lay.m + t] = neg * (yb[lay.q + verts[0]] + yb[lay.a + t] + yb[lay.b + t]);
            }
        }
    }
}
