//! Certified primal and dual bounds for the current iterate.
//!
//! Dual: `p` is scaled per pixel into the domain of `η*`, then `q` is shifted
//! down per pixel until every simplex constraint
//! `η*(D_T p) + ρ̂_T*(D_T q) + q_{T₀} ≤ 0` holds; the dual objective
//! `Σ_x min_k (−div p + q)_k` of that point is a lower bound.
//!
//! Primal: the simplex pieces `(m_T, Y_T)` of the iterate are clamped to
//! nonnegative nodal masses and rescaled so they sum to `v(x)`; the gradient
//! pieces `X_T` are corrected by a least-squares update so that
//! `Σ_T D_TᵀX_T = ∇ₓv(x)`. The objective of that point is an upper bound.

use rayon::prelude::*;

use super::{DataModel, Mode, Solver};
use crate::linalg::solve_in_place;
use crate::regularizer::RegularizerKind;
use crate::scalar::Real;

/// Primal and dual bounds with `relative = (primal − dual) / max(1, |primal|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport<T> {
    pub primal: T,
    pub dual: T,
    pub relative: T,
}

impl<T: Real> Solver<'_, T> {
    /// Certified bounds at the current iterate.
    pub fn certify(&self) -> GapReport<T> {
        let np = self.problem.num_pixels();
        let theta: Vec<T> = (0..np).into_par_iter().map(|px| self.dual_scale(px)).collect();
        let dual_terms: Vec<T> = (0..np).into_par_iter().map(|px| self.dual_pixel(px, &theta)).collect();
        let primal_terms: Vec<T> = (0..np).into_par_iter().map(|px| self.primal_pixel(px)).collect();
        let primal: T = primal_terms.into_iter().sum();
        let dual: T = dual_terms.into_iter().sum();
        let relative = if primal.is_finite() { (primal - dual) / T::one().max(primal.abs()) } else { T::infinity() };
        GapReport { primal, dual, relative }
    }

    /// `D_T p(x)` as an `s × d` matrix.
    fn grad_p(&self, px: usize, t: usize, out: &mut [T]) {
        let lay = &self.op.layout;
        let (s, d) = (lay.s, lay.d);
        let yb = &self.y[px * lay.dual_block..(px + 1) * lay.dual_block];
        let mut col = [T::zero(); 4];
        for c in 0..d {
            self.op.local_grad(t, &yb[lay.p..], d, c, &mut col);
            for i in 0..s {
                out[i * d + c] = col[i];
            }
        }
    }

    fn dual_scale(&self, px: usize) -> T {
        let lay = &self.op.layout;
        let (s, d) = (lay.s, lay.d);
        let reg = &self.problem.regularizer;
        let mut gp = vec![T::zero(); s * d];
        (0..lay.simplices)
            .map(|t| {
                self.grad_p(px, t, &mut gp);
                reg.domain_scale(&gp, s, d)
            })
            .fold(T::one(), T::min)
    }

    fn dual_pixel(&self, px: usize, theta: &[T]) -> T {
        let lay = &self.op.layout;
        let (l, s, d) = (lay.labels, lay.s, lay.d);
        let grid = &self.op.grid;
        let y = &self.y;
        let yb = &y[px * lay.dual_block..(px + 1) * lay.dual_block];
        // −div p' = Kᵀ restricted to p, with p' = θ p
        let mut obj = vec![T::zero(); l];
        for axis in 0..d {
            if grid.forward(px, axis).is_some() {
                for k in 0..l {
                    obj[k] -= theta[px] * yb[lay.p + k * d + axis];
                }
            }
            if let Some(nb) = grid.backward(px, axis) {
                let yn = &y[nb * lay.dual_block..];
                for k in 0..l {
                    obj[k] += theta[nb] * yn[lay.p + k * d + axis];
                }
            }
        }
        match &self.problem.data {
            DataModel::LabelCosts(c) => {
                for k in 0..l {
                    obj[k] += c[px * l + k];
                }
            }
            DataModel::Convexified(conv) => {
                let reg = &self.problem.regularizer;
                let mut gp = vec![T::zero(); s * d];
                let mut gq = [T::zero(); 4];
                let mut shift = T::zero();
                for t in 0..lay.simplices {
                    self.grad_p(px, t, &mut gp);
                    gp.iter_mut().for_each(|v| *v *= theta[px]);
                    self.op.local_grad(t, &yb[lay.q..], 1, 0, &mut gq);
                    let need = reg.conjugate(&gp, s, d)
                        + conv.entry(px, t).conjugate(&gq[..s])
                        + yb[lay.q + self.op.simplex(t)[0]];
                    shift = shift.max(need);
                }
                for k in 0..l {
                    obj[k] += yb[lay.q + k] - shift;
                }
            }
        }
        obj.into_iter().fold(T::infinity(), T::min)
    }

    /// Best bound over a few splits of the vertex masses `v(x)` among
    /// incident simplices: the iterate's own split, a greedy one that moves
    /// each vertex mass to its heaviest incident simplex (this matters for
    /// capped data terms), and for the quadratic regularizer splits that leak
    /// a share `δ` evenly to all incident simplices so every simplex that
    /// carries flux has mass.
    fn primal_pixel(&self, px: usize) -> T {
        let DataModel::Convexified(_) = self.problem.data else {
            return self.primal_pixel_split(px, Split::Iterate(T::zero()));
        };
        let weighted = self.problem.regularizer.kind == RegularizerKind::Quadratic && self.problem.mode() == Mode::Sublabel;
        let mut best = self.primal_pixel_split(px, Split::Iterate(T::zero()));
        best = best.min(self.primal_pixel_split(px, Split::Greedy));
        if weighted {
            for delta in [1e-8, 1e-6, 1e-4, 1e-2] {
                best = best.min(self.primal_pixel_split(px, Split::Iterate(T::lit(delta))));
            }
        }
        best
    }

    fn primal_pixel_split(&self, px: usize, split: Split<T>) -> T {
        let lay = &self.op.layout;
        let (l, nt, s, d) = (lay.labels, lay.simplices, lay.s, lay.d);
        let sd = s * d;
        let grid = &self.op.grid;
        let reg = &self.problem.regularizer;
        let xb = &self.x[px * lay.primal_block..(px + 1) * lay.primal_block];
        let v = &xb[lay.v..lay.v + l];

        // masses per simplex, and the data cost
        let mut mass = vec![T::zero(); nt];
        let mut cost = T::zero();
        match &self.problem.data {
            DataModel::LabelCosts(c) => {
                cost += (0..l).map(|k| c[px * l + k] * v[k]).sum::<T>();
                mass.iter_mut().for_each(|m| *m = T::one());
            }
            DataModel::Convexified(conv) => {
                let mut nodal = vec![T::zero(); nt * (s + 1)];
                for t in 0..nt {
                    let dm = self.op.dmat(t);
                    for j in 0..=s {
                        let mut c: T = (0..s).map(|i| dm[i * (s + 1) + j] * xb[lay.y + t * s + i]).sum();
                        if j == 0 {
                            c += xb[lay.m + t];
                        }
                        nodal[t * (s + 1) + j] = c.max(T::zero());
                    }
                }
                if split == Split::Greedy {
                    let heavy: Vec<T> = (0..nt).map(|t| (0..=s).map(|j| nodal[t * (s + 1) + j]).sum()).collect();
                    let mut keep = vec![false; nodal.len()];
                    for inc in &self.incidence {
                        if let Some(&(t, j)) = inc.iter().max_by(|a, b| heavy[a.0].partial_cmp(&heavy[b.0]).unwrap()) {
                            keep[t * (s + 1) + j] = true;
                        }
                    }
                    for (c, k) in nodal.iter_mut().zip(&keep) {
                        *c = if *k { T::one() } else { T::zero() };
                    }
                }
                let delta = match split {
                    Split::Iterate(d) => d,
                    Split::Greedy => T::zero(),
                };
                for (k, inc) in self.incidence.iter().enumerate() {
                    let total: T = inc.iter().map(|&(t, j)| nodal[t * (s + 1) + j]).sum();
                    if total > T::zero() {
                        let f = v[k] / total;
                        for &(t, j) in inc {
                            nodal[t * (s + 1) + j] *= f;
                        }
                    } else if let Some(&(t, j)) = inc.first() {
                        nodal[t * (s + 1) + j] = v[k];
                    }
                    if delta > T::zero() && !inc.is_empty() {
                        let even = delta * v[k] / T::lit(inc.len() as f64);
                        for &(t, j) in inc {
                            let c = &mut nodal[t * (s + 1) + j];
                            *c = (T::one() - delta) * *c + even;
                        }
                    }
                }
                let mut w = [T::zero(); 4];
                for t in 0..nt {
                    let piece = &nodal[t * (s + 1)..(t + 1) * (s + 1)];
                    let m: T = piece.iter().copied().sum();
                    mass[t] = m;
                    if m > T::zero() {
                        let e = &self.problem.frames[t].edges;
                        for i in 0..s {
                            w[i] = (0..s).map(|k| e[i * s + k] * piece[k + 1]).sum::<T>() / m;
                        }
                        cost += m * conv.entry(px, t).eval(&w[..s]);
                    }
                }
            }
        }

        // gradient pieces: correct X so that Σ_T D_TᵀX_T = ∇ₓv
        let mut xg: Vec<T> = xb[lay.xg..lay.xg + nt * sd].to_vec();
        let weighted = reg.kind == RegularizerKind::Quadratic && self.problem.mode() == Mode::Sublabel;
        if weighted {
            for t in 0..nt {
                if mass[t] <= T::zero() {
                    xg[t * sd..(t + 1) * sd].iter_mut().for_each(|v| *v = T::zero());
                }
            }
        }
        let mut res = vec![T::zero(); l * d];
        for axis in 0..d {
            if let Some(nb) = grid.forward(px, axis) {
                let vn = &self.x[nb * lay.primal_block + lay.v..];
                for k in 0..l {
                    res[k * d + axis] = vn[k] - v[k];
                }
            }
        }
        let scatter = |xg: &[T], res: &mut [T]| {
            for t in 0..nt {
                let dm = self.op.dmat(t);
                for (j, &k) in self.op.simplex(t).iter().enumerate() {
                    for c in 0..d {
                        res[k * d + c] -= (0..s).map(|i| dm[i * (s + 1) + j] * xg[t * sd + i * d + c]).sum::<T>();
                    }
                }
            }
        };
        scatter(&xg, &mut res);
        let scale = res.iter().fold(T::one(), |a, &b| a.max(b.abs()));

        let mut phi = vec![T::zero(); l * d];
        if weighted {
            // pin the constant on each group of labels joined by massive simplices
            let mut root: Vec<usize> = (0..l).collect();
            fn find(root: &mut [usize], k: usize) -> usize {
                let mut k = k;
                while root[k] != k {
                    root[k] = root[root[k]];
                    k = root[k];
                }
                k
            }
            for t in 0..nt {
                if mass[t] > T::zero() {
                    let verts = self.op.simplex(t);
                    for &k in &verts[1..] {
                        let (a, b) = (find(&mut root, verts[0]), find(&mut root, k));
                        root[a] = b;
                    }
                }
            }
            let comp: Vec<usize> = (0..l).map(|k| find(&mut root, k)).collect();
            let mut a: Vec<T> =
                (0..l * l).map(|i| if comp[i / l] == comp[i % l] { T::one() } else { T::zero() }).collect();
            for t in 0..nt {
                let dm = self.op.dmat(t);
                let verts = self.op.simplex(t);
                for (j, &kj) in verts.iter().enumerate() {
                    for (jj, &kk) in verts.iter().enumerate() {
                        a[kj * l + kk] += mass[t] * (0..s).map(|i| dm[i * (s + 1) + j] * dm[i * (s + 1) + jj]).sum::<T>();
                    }
                }
            }
            for c in 0..d {
                let mut rhs: Vec<T> = (0..l).map(|k| res[k * d + c]).collect();
                let mut m = a.clone();
                if solve_in_place(&mut m, &mut rhs, l, T::epsilon() * T::lit(16.0)).is_none() {
                    return T::infinity();
                }
                for k in 0..l {
                    phi[k * d + c] = rhs[k];
                }
            }
        } else {
            for k in 0..l {
                for c in 0..d {
                    phi[k * d + c] = (0..l).map(|j| self.lap_inv[k * l + j] * res[j * d + c]).sum();
                }
            }
        }
        let mut col = [T::zero(); 4];
        for t in 0..nt {
            let wt = if weighted { mass[t] } else { T::one() };
            for c in 0..d {
                self.op.local_grad(t, &phi, d, c, &mut col);
                for i in 0..s {
                    xg[t * sd + i * d + c] += wt * col[i];
                }
            }
        }
        if weighted {
            let mut check = vec![T::zero(); l * d];
            for axis in 0..d {
                if let Some(nb) = grid.forward(px, axis) {
                    let vn = &self.x[nb * lay.primal_block + lay.v..];
                    for k in 0..l {
                        check[k * d + axis] = vn[k] - v[k];
                    }
                }
            }
            scatter(&xg, &mut check);
            if check.iter().any(|r| r.abs() > T::lit(1e-9) * scale) {
                return T::infinity();
            }
        }
        for t in 0..nt {
            cost += reg.perspective(mass[t], &xg[t * sd..(t + 1) * sd], s, d);
        }
        cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Split<T> {
    /// The iterate's nodal shares, with a leaked fraction.
    Iterate(T),
    Greedy,
}
