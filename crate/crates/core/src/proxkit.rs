//! Exact Euclidean projections onto small convex sets.
//!
//! These are the proximal steps of the primal-dual solver and are called once
//! per pixel and simplex in every iteration, so the hot paths work in place
//! and avoid allocation.

use crate::error::{Error, Result};
use crate::linalg::{solve_in_place, symmetric_eigen};
use crate::scalar::Real;

/// Projection onto the unit simplex `{x ≥ 0, Σx = 1}`.
pub fn project_simplex<T: Real>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_in_place(&mut out, &mut scratch);
    out
}

/// In-place simplex projection by sorting and thresholding. `scratch` is
/// reused between calls.
pub fn project_simplex_in_place<T: Real>(v: &mut [T], scratch: &mut Vec<T>) {
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (i, &x) in scratch.iter().enumerate() {
        cum += x;
        let cand = (cum - T::one()) / T::of_usize(i + 1);
        if x - cand > T::zero() {
            theta = cand;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(T::zero());
    }
}

/// Matrix norm whose unit ball [`project_ball`] projects onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallNorm {
    Frobenius,
    /// Largest singular value.
    Spectral,
}

/// Projection of an `rows × cols` matrix onto the ball of radius `radius`.
pub fn project_ball<T: Real>(z: &[T], rows: usize, cols: usize, radius: T, norm: BallNorm) -> Vec<T> {
    let mut out = z.to_vec();
    project_ball_in_place(&mut out, rows, cols, radius, norm);
    out
}

pub fn project_ball_in_place<T: Real>(z: &mut [T], rows: usize, cols: usize, radius: T, norm: BallNorm) {
    match norm {
        BallNorm::Frobenius => {
            let n = z.iter().map(|&x| x * x).sum::<T>().sqrt();
            if n > radius {
                let f = radius / n;
                z.iter_mut().for_each(|x| *x *= f);
            }
        }
        BallNorm::Spectral => {
            if rows == 1 || cols == 1 {
                return project_ball_in_place(z, rows, cols, radius, BallNorm::Frobenius);
            }
            // Shrink along the eigenvectors of the smaller Gram matrix.
            let (k, left) = if rows <= cols { (rows, true) } else { (cols, false) };
            let mut gram = vec![T::zero(); k * k];
            for i in 0..k {
                for j in 0..k {
                    gram[i * k + j] = if left {
                        (0..cols).map(|c| z[i * cols + c] * z[j * cols + c]).sum()
                    } else {
                        (0..rows).map(|r| z[r * cols + i] * z[r * cols + j]).sum()
                    };
                }
            }
            let (ev, vecs) = symmetric_eigen(&gram, k);
            if ev.iter().all(|&e| e.max(T::zero()).sqrt() <= radius) {
                return;
            }
            // M = V diag(f) Vᵀ with f = min(1, radius / σ)
            let mut m = vec![T::zero(); k * k];
            for (e, &lam) in ev.iter().enumerate() {
                let sigma = lam.max(T::zero()).sqrt();
                let f = if sigma > radius { radius / sigma } else { T::one() };
                for i in 0..k {
                    for j in 0..k {
                        m[i * k + j] += vecs[i * k + e] * f * vecs[j * k + e];
                    }
                }
            }
            let orig = z.to_vec();
            for r in 0..rows {
                for c in 0..cols {
                    z[r * cols + c] = if left {
                        (0..k).map(|i| m[r * k + i] * orig[i * cols + c]).sum()
                    } else {
                        (0..k).map(|i| orig[r * cols + i] * m[i * k + c]).sum()
                    };
                }
            }
        }
    }
}

/// Projection onto `{(ζ, t) : c‖ζ‖²/2 ≤ t}`.
pub fn project_parabola_epi<T: Real>(z: &[T], t: T, c: T) -> (Vec<T>, T) {
    let mut out = z.to_vec();
    let t = project_parabola_epi_in_place(&mut out, t, c);
    (out, t)
}

pub fn project_parabola_epi_in_place<T: Real>(z: &mut [T], t: T, c: T) -> T {
    let r0 = z.iter().map(|&x| x * x).sum::<T>().sqrt();
    let half = T::lit(0.5);
    if c * r0 * r0 * half <= t {
        return t;
    }
    if r0 == T::zero() {
        return T::zero();
    }
    let r = parabola_radius(r0, t, c);
    let f = r / r0;
    z.iter_mut().for_each(|x| *x *= f);
    c * r * r * half
}

/// Positive root of `(c²/2) r³ + (1 − c t) r − r0` in `(0, r0]`.
fn parabola_radius<T: Real>(r0: T, t: T, c: T) -> T {
    let half = T::lit(0.5);
    let a = c * c * half;
    let b = T::one() - c * t;
    let g = |r: T| (a * r * r + b) * r - r0;
    let (mut lo, mut hi) = (T::zero(), r0);
    // Newton from the bracket end where g is convex and positive.
    let mut r = hi;
    let tol = T::epsilon() * T::lit(4.0) * (T::one() + r0);
    for _ in 0..100 {
        let gr = g(r);
        if gr.abs() <= tol {
            return r;
        }
        if gr > T::zero() {
            hi = r;
        } else {
            lo = r;
        }
        let d = T::lit(3.0) * a * r * r + b;
        let next = r - gr / d;
        r = if d > T::zero() && next > lo && next < hi { next } else { (lo + hi) * half };
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    r
}

/// Projection onto `{(ζ, t) : c‖ζ‖²/2 ≤ t, ‖ζ‖ ≤ radius}`.
pub fn project_truncated_parabola_epi<T: Real>(z: &[T], t: T, c: T, radius: T) -> (Vec<T>, T) {
    let mut out = z.to_vec();
    let t = project_truncated_parabola_epi_in_place(&mut out, t, c, radius);
    (out, t)
}

pub fn project_truncated_parabola_epi_in_place<T: Real>(z: &mut [T], t: T, c: T, radius: T) -> T {
    let r0 = z.iter().map(|&x| x * x).sum::<T>().sqrt();
    let rim = c * radius * radius * T::lit(0.5);
    if r0 <= radius {
        // either feasible or the parabola projection, which shrinks r
        return project_parabola_epi_in_place(z, t, c);
    }
    let r1 = parabola_radius(r0, t, c);
    if c * r0 * r0 * T::lit(0.5) > t && r1 <= radius {
        let f = r1 / r0;
        z.iter_mut().for_each(|x| *x *= f);
        return c * r1 * r1 * T::lit(0.5);
    }
    // wall r = radius (t ≥ rim), or its lower corner
    let f = radius / r0;
    z.iter_mut().for_each(|x| *x *= f);
    t.max(rim)
}

/// Intersection of halfspaces `⟨aⱼ, x⟩ ≤ bⱼ` in `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceSet<T> {
    pub dim: usize,
    /// Row-major `len × dim`.
    pub normals: Vec<T>,
    pub offsets: Vec<T>,
}

impl<T: Real> HalfspaceSet<T> {
    pub fn new(dim: usize) -> Self {
        HalfspaceSet { dim, normals: Vec::new(), offsets: Vec::new() }
    }

    pub fn push(&mut self, normal: &[T], offset: T) {
        debug_assert_eq!(normal.len(), self.dim);
        self.normals.extend_from_slice(normal);
        self.offsets.push(offset);
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn normal(&self, j: usize) -> &[T] {
        &self.normals[j * self.dim..(j + 1) * self.dim]
    }

    /// Largest constraint violation `max_j ⟨aⱼ, x⟩ − bⱼ` (0 if feasible).
    pub fn violation(&self, x: &[T]) -> T {
        (0..self.len())
            .map(|j| self.normal(j).iter().zip(x).map(|(&a, &b)| a * b).sum::<T>() - self.offsets[j])
            .fold(T::zero(), T::max)
    }
}

/// Maximal supported dimension of [`project_halfspace_intersection`].
pub const MAX_QP_DIM: usize = 4;

/// Projection onto a halfspace intersection by a dual active-set method
/// (Goldfarb–Idnani with identity Hessian).
pub fn project_halfspace_intersection<T: Real>(x0: &[T], h: &HalfspaceSet<T>) -> Result<Vec<T>> {
    let mut x = x0.to_vec();
    project_halfspaces_in_place(&mut x, h.dim, &h.normals, &h.offsets)?;
    Ok(x)
}

/// In-place form of [`project_halfspace_intersection`] on raw slices;
/// `dim ≤ MAX_QP_DIM`.
pub fn project_halfspaces_in_place<T: Real>(x: &mut [T], dim: usize, normals: &[T], offsets: &[T]) -> Result<()> {
    assert!(dim <= MAX_QP_DIM, "halfspace projection supports dimension <= {MAX_QP_DIM}");
    let count = offsets.len();
    let row = |j: usize| &normals[j * dim..(j + 1) * dim];
    let dotx = |a: &[T], x: &[T]| a.iter().zip(x).map(|(&p, &q)| p * q).sum::<T>();
    let scale = |j: usize, x: &[T]| {
        let a = row(j);
        T::one() + offsets[j].abs() + a.iter().map(|&v| v * v).sum::<T>().sqrt() * x.iter().map(|&v| v * v).sum::<T>().sqrt()
    };
    let feas_tol = T::epsilon() * T::lit(64.0);

    let mut active = [0usize; MAX_QP_DIM];
    let mut mult = [T::zero(); MAX_QP_DIM];
    let mut q = 0usize;
    let cap = 10 * count.max(1);
    let mut iters = 0usize;

    loop {
        // most violated constraint (relative to its scale)
        let mut p = usize::MAX;
        let mut worst = T::zero();
        for j in 0..count {
            let s = (dotx(row(j), x) - offsets[j]) / scale(j, x);
            if s > feas_tol && s > worst && !active[..q].contains(&j) {
                worst = s;
                p = j;
            }
        }
        if p == usize::MAX {
            return Ok(());
        }
        let ap = row(p);
        let mut up = T::zero();
        loop {
            iters += 1;
            if iters > cap {
                return Err(Error::IterationCap(cap));
            }
            // r = (NᵀN)⁻¹ Nᵀ a_p, z = a_p − N r
            let mut r = [T::zero(); MAX_QP_DIM];
            let mut z = [T::zero(); MAX_QP_DIM];
            z[..dim].copy_from_slice(ap);
            if q > 0 {
                let mut gram = [T::zero(); MAX_QP_DIM * MAX_QP_DIM];
                for i in 0..q {
                    for j in 0..q {
                        gram[i * q + j] = dotx(row(active[i]), row(active[j]));
                    }
                    r[i] = dotx(row(active[i]), ap);
                }
                if solve_in_place(&mut gram[..q * q], &mut r[..q], q, T::epsilon() * T::lit(16.0)).is_none() {
                    return Err(Error::Infeasible);
                }
                for i in 0..q {
                    let ai = row(active[i]);
                    for c in 0..dim {
                        z[c] -= r[i] * ai[c];
                    }
                }
            }
            let zz: T = z[..dim].iter().map(|&v| v * v).sum();
            let apn: T = ap.iter().map(|&v| v * v).sum();
            let dependent = zz <= T::epsilon() * T::lit(1e3) * apn;

            // partial step: first active multiplier to hit zero
            let mut t2 = T::infinity();
            let mut block = usize::MAX;
            for i in 0..q {
                if r[i] > T::zero() {
                    let ti = mult[i] / r[i];
                    if ti < t2 {
                        t2 = ti;
                        block = i;
                    }
                }
            }
            let sp = dotx(ap, x) - offsets[p];
            let t1 = if dependent { T::infinity() } else { sp / zz };
            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::Infeasible);
            }
            let t = t1.min(t2);
            if !dependent {
                for c in 0..dim {
                    x[c] -= t * z[c];
                }
            }
            for i in 0..q {
                mult[i] -= t * r[i];
            }
            up += t;
            if t1 <= t2 {
                if q == MAX_QP_DIM || q == dim {
                    // numerically dependent on the active set; treat as done
                    break;
                }
                active[q] = p;
                mult[q] = up;
                q += 1;
                break;
            }
            // drop the blocking constraint
            for i in block..q - 1 {
                active[i] = active[i + 1];
                mult[i] = mult[i + 1];
            }
            q -= 1;
        }
    }
}
