//! Primal-dual solution of the lifted saddle-point problem on a pixel grid.
//!
//! The nodal dual fields `p` (regularizer) and `q` (data) are constrained
//! through their per-simplex gradients, which does not admit a separable
//! projection. Copies `G_T`, `g_T` live in the dual and are tied to `D_T p`,
//! `D_T q` by free primal multipliers `X_T`, `Y_T`; a third multiplier `m_T`
//! enforces `a_T + b_T + q_{T₀} = 0`. Every dual projection then acts on one
//! `(pixel, simplex)` block: `(G_T, a_T)` onto `epi η*` and `(g_T, b_T)` onto
//! `epi ρ̂_T*`. See [`operator`] for the exact coupling.
//!
//! The primal multipliers have a direct reading: `m_T` is the mass that
//! `v(x)` puts on simplex `T`, `Y_T` its first moment in local coordinates and
//! `X_T` the matching gradient, so the primal objective is
//! `Σ_T m_T ρ̂_T(Y_T/m_T) + m_T η(X_T/m_T)`. The reported gap compares a
//! feasible primal point restored from the iterate with a feasible dual point
//! built from `p`, `q`; it is a certified bound on suboptimality.

mod gap;
mod grid;
pub mod operator;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use gap::GapReport;
pub use grid::Grid;
pub use operator::{Layout, Operator};

use crate::dataterm::{convexify_all, lellmann_mode_data, ConvexifiedDataTerm, DataTermSpec};
use crate::error::{Error, Result};
use crate::fem::{frames, FrameKind, SimplexFrame};
use crate::geometry::Triangulation;
use crate::linalg::invert;
use crate::proxkit::{project_ball_in_place, project_halfspaces_in_place, project_simplex_in_place, BallNorm};
use crate::regularizer::{RegularizerKind, RegularizerSpec};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Convexified per-simplex data terms (sublabel accurate).
    #[default]
    Sublabel,
    /// Data only at the labels, TV as a Lipschitz constraint on `p`.
    LellmannTv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precond {
    /// Scalar steps `σ = τ = 0.95/‖K‖`.
    #[default]
    Off,
    /// Diagonal steps from row and column sums of `|K|`.
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub max_iter: usize,
    pub gap_tol: T,
    /// Iterations between gap evaluations.
    pub check_every: usize,
    pub precond: Precond,
    /// Products with `KᵀK` spent on the `‖K‖` estimate.
    pub power_iters: usize,
    /// Seed of the start vector of the `‖K‖` estimate.
    pub seed: u64,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            max_iter: 20_000,
            gap_tol: T::lit(1e-5),
            check_every: 50,
            precond: Precond::Off,
            power_iters: 50,
            seed: 0,
        }
    }
}

/// Data model of a lifted problem.
#[derive(Debug, Clone)]
pub enum DataModel<T> {
    Convexified(ConvexifiedDataTerm<T>),
    /// `pixels × L` costs at the labels.
    LabelCosts(Vec<T>),
}

/// A fully assembled lifted problem.
#[derive(Debug, Clone)]
pub struct LiftedProblem<T: Real> {
    pub grid: Grid,
    pub tri: Triangulation<T>,
    pub frame_kind: FrameKind,
    pub frames: Vec<SimplexFrame<T>>,
    pub regularizer: RegularizerSpec<T>,
    pub data: DataModel<T>,
}

impl<T: Real> LiftedProblem<T> {
    /// Sublabel-accurate problem; convexifies the data term for every pixel.
    pub fn sublabel(
        grid: Grid,
        tri: Triangulation<T>,
        frame_kind: FrameKind,
        regularizer: RegularizerSpec<T>,
        spec: &DataTermSpec<T>,
    ) -> Result<Self> {
        check_pixels(&grid, spec)?;
        let frames = frames(&tri, frame_kind)?;
        let data = DataModel::Convexified(convexify_all(spec, &tri, &frames)?);
        Ok(LiftedProblem { grid, tri, frame_kind, frames, regularizer, data })
    }

    /// Label-resolution TV model. Requires a TV regularizer.
    pub fn lellmann_tv(
        grid: Grid,
        tri: Triangulation<T>,
        frame_kind: FrameKind,
        regularizer: RegularizerSpec<T>,
        spec: &DataTermSpec<T>,
    ) -> Result<Self> {
        if !regularizer.kind.is_tv() {
            return Err(Error::InvalidArgument("the label-resolution mode needs a TV regularizer".into()));
        }
        check_pixels(&grid, spec)?;
        let frames = frames(&tri, frame_kind)?;
        let costs: Vec<Vec<T>> = (0..grid.num_pixels()).into_par_iter().map(|x| lellmann_mode_data(spec, &tri, x)).collect();
        let data = DataModel::LabelCosts(costs.concat());
        Ok(LiftedProblem { grid, tri, frame_kind, frames, regularizer, data })
    }

    pub fn build(
        mode: Mode,
        grid: Grid,
        tri: Triangulation<T>,
        frame_kind: FrameKind,
        regularizer: RegularizerSpec<T>,
        spec: &DataTermSpec<T>,
    ) -> Result<Self> {
        match mode {
            Mode::Sublabel => Self::sublabel(grid, tri, frame_kind, regularizer, spec),
            Mode::LellmannTv => Self::lellmann_tv(grid, tri, frame_kind, regularizer, spec),
        }
    }

    pub fn mode(&self) -> Mode {
        match self.data {
            DataModel::Convexified(_) => Mode::Sublabel,
            DataModel::LabelCosts(_) => Mode::LellmannTv,
        }
    }

    pub fn num_pixels(&self) -> usize {
        self.grid.num_pixels()
    }

    pub fn num_labels(&self) -> usize {
        self.tri.num_vertices()
    }
}

fn check_pixels<T: Real>(grid: &Grid, spec: &DataTermSpec<T>) -> Result<()> {
    if grid.num_pixels() != spec.num_pixels() {
        return Err(Error::Shape(format!("grid has {} pixels, data term {}", grid.num_pixels(), spec.num_pixels())));
    }
    Ok(())
}

/// One logged gap evaluation: the best certified bounds up to `iteration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<T> {
    pub iteration: usize,
    pub primal: T,
    pub dual: T,
    pub relative_gap: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics<T> {
    pub iterations: usize,
    pub converged: bool,
    pub final_gap: GapReport<T>,
    /// Lanczos estimate of `‖K‖` (plain steps only).
    pub norm_estimate: Option<T>,
    pub trace: Vec<TraceEntry<T>>,
    pub seconds: f64,
}

/// Lifted field (`pixels × L`, rows in the unit simplex) with diagnostics.
#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub v: Vec<T>,
    pub labels: usize,
    pub diagnostics: Diagnostics<T>,
}

/// `‖K‖` from `iters` Lanczos steps on `KᵀK` with a seeded random start.
///
/// This is the largest Ritz value of the Krylov space that power iteration
/// explores with the same number of products, so it is never below the power
/// estimate and converges much faster when the top singular values cluster.
pub fn estimate_norm<T: Real>(op: &Operator<T>, iters: usize, seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = op.primal_len();
    let mut q: Vec<T> = (0..n).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
    let nrm = |v: &[T]| v.iter().map(|&a| a * a).sum::<T>().sqrt();
    let n0 = nrm(&q);
    q.iter_mut().for_each(|a| *a /= n0);
    let mut q_prev = vec![T::zero(); n];
    let mut kx = vec![T::zero(); op.dual_len()];
    let mut w = vec![T::zero(); n];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut b_prev = T::zero();
    for _ in 0..iters.max(1) {
        op.apply(&q, &mut kx, false);
        op.apply_adjoint(&kx, &mut w, false);
        let a = w.iter().zip(&q).map(|(&x, &y)| x * y).sum::<T>();
        for i in 0..n {
            w[i] = w[i] - a * q[i] - b_prev * q_prev[i];
        }
        alpha.push(a);
        let b = nrm(&w);
        // invariant subspace found
        if b <= T::epsilon() * alpha.iter().fold(T::zero(), |m, &x| m.max(x.abs())) {
            break;
        }
        beta.push(b);
        q_prev = std::mem::replace(&mut q, w.iter().map(|&x| x / b).collect());
        b_prev = b;
    }
    largest_tridiagonal_eigenvalue(&alpha, &beta).max(T::zero()).sqrt()
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal `d`
/// and off-diagonal `e`, by Sturm-count bisection inside the Gershgorin
/// interval.
fn largest_tridiagonal_eigenvalue<T: Real>(d: &[T], e: &[T]) -> T {
    let m = d.len();
    let radius = |i: usize| {
        (if i + 1 < m { e[i].abs() } else { T::zero() }) + if i > 0 { e[i - 1].abs() } else { T::zero() }
    };
    let mut lo = (0..m).map(|i| d[i] - radius(i)).fold(T::infinity(), T::min);
    let mut hi = (0..m).map(|i| d[i] + radius(i)).fold(T::neg_infinity(), T::max);
    // number of eigenvalues below x
    let count_below = |x: T| {
        let mut count = 0;
        let mut q = T::one();
        for i in 0..m {
            q = d[i] - x - if i > 0 { e[i - 1] * e[i - 1] / q } else { T::zero() };
            if q == T::zero() {
                q = T::epsilon() * (x.abs() + T::one());
            }
            if q < T::zero() {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) == m {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// PDHG iteration state for a [`LiftedProblem`].
pub struct Solver<'a, T: Real> {
    problem: &'a LiftedProblem<T>,
    op: Operator<T>,
    /// Per `(pixel, simplex)`: halfspace normals (`(s+1)` each) and offsets.
    halfspaces: Vec<(Vec<T>, Vec<T>)>,
    x: Vec<T>,
    x_bar: Vec<T>,
    y: Vec<T>,
    kx: Vec<T>,
    kty: Vec<T>,
    tau: Vec<T>,
    sigma: Vec<T>,
    norm_estimate: Option<T>,
    iterations: usize,
    /// `(Σ_T D_TᵀD_T + 11ᵀ)⁻¹`, `L × L`.
    lap_inv: Vec<T>,
    /// For each label, the `(simplex, local index)` pairs containing it.
    incidence: Vec<Vec<(usize, usize)>>,
}

impl<'a, T: Real> Solver<'a, T> {
    /// Initial state: `v` uniform, everything else zero.
    pub fn new(problem: &'a LiftedProblem<T>, options: &SolverOptions<T>) -> Result<Self> {
        let sublabel = problem.mode() == Mode::Sublabel;
        let op = Operator::new(problem.grid.clone(), &problem.tri, &problem.frames, sublabel);
        let lay = op.layout.clone();
        let np = problem.num_pixels();
        let l = lay.labels;

        let mut x = vec![T::zero(); op.primal_len()];
        for px in 0..np {
            for k in 0..l {
                x[px * lay.primal_block + lay.v + k] = T::one() / T::of_usize(l);
            }
        }
        let halfspaces = match &problem.data {
            DataModel::Convexified(c) => c
                .entries
                .iter()
                .map(|e| {
                    let h = e.halfspaces();
                    (h.normals, h.offsets)
                })
                .collect(),
            DataModel::LabelCosts(_) => Vec::new(),
        };

        let (tau, sigma, norm_estimate) = match options.precond {
            Precond::Off => {
                let n = estimate_norm(&op, options.power_iters, options.seed);
                let step = T::lit(0.95) / n.max(T::epsilon());
                (vec![step; op.primal_len()], vec![step; op.dual_len()], Some(n))
            }
            Precond::Diagonal => {
                let (tau, sigma) = diagonal_steps(&op);
                (tau, sigma, None)
            }
        };

        let mut lap = vec![T::one(); l * l];
        let s = lay.s;
        for t in 0..lay.simplices {
            let dm = op.dmat(t);
            let verts = op.simplex(t);
            for (j, &kj) in verts.iter().enumerate() {
                for (jj, &kk) in verts.iter().enumerate() {
                    lap[kj * l + kk] += (0..s).map(|i| dm[i * (s + 1) + j] * dm[i * (s + 1) + jj]).sum::<T>();
                }
            }
        }
        let lap_inv = invert(&lap, l, T::epsilon() * T::lit(16.0))
            .ok_or_else(|| Error::InvalidArgument("label mesh is disconnected".into()))?;
        let mut incidence = vec![Vec::new(); l];
        for t in 0..lay.simplices {
            for (j, &k) in op.simplex(t).iter().enumerate() {
                incidence[k].push((t, j));
            }
        }

        Ok(Solver {
            problem,
            x_bar: x.clone(),
            kx: vec![T::zero(); op.dual_len()],
            kty: vec![T::zero(); op.primal_len()],
            y: vec![T::zero(); op.dual_len()],
            x,
            op,
            halfspaces,
            tau,
            sigma,
            norm_estimate,
            iterations: 0,
            lap_inv,
            incidence,
        })
    }

    pub fn operator(&self) -> &Operator<T> {
        &self.op
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn norm_estimate(&self) -> Option<T> {
        self.norm_estimate
    }

    /// Packed primal variables.
    pub fn primal(&self) -> &[T] {
        &self.x
    }

    /// Packed dual variables.
    pub fn dual(&self) -> &[T] {
        &self.y
    }

    /// The lifted field `v`, `pixels × L`.
    pub fn field(&self) -> Vec<T> {
        let lay = &self.op.layout;
        self.x.chunks_exact(lay.primal_block).flat_map(|b| b[lay.v..lay.v + lay.labels].iter().copied()).collect()
    }

    /// Replaces the primal iterate, projecting `v` onto the simplex.
    pub fn set_primal(&mut self, x: &[T]) {
        assert_eq!(x.len(), self.x.len());
        self.x.copy_from_slice(x);
        let lay = self.op.layout.clone();
        let mut scratch = Vec::new();
        for b in self.x.chunks_exact_mut(lay.primal_block) {
            project_simplex_in_place(&mut b[lay.v..lay.v + lay.labels], &mut scratch);
        }
        self.x_bar.copy_from_slice(&self.x);
    }

    /// Replaces the dual iterate, projecting every constrained block.
    pub fn set_dual(&mut self, y: &[T]) -> Result<()> {
        assert_eq!(y.len(), self.y.len());
        self.y.copy_from_slice(y);
        let lay = self.op.layout.clone();
        for (px, b) in self.y.chunks_exact_mut(lay.dual_block).enumerate() {
            project_dual_pixel(self.problem, &lay, &self.halfspaces, px, b)?;
        }
        Ok(())
    }

    /// One PDHG iteration with extrapolation `θ = 1`.
    pub fn step(&mut self) -> Result<()> {
        let lay = self.op.layout.clone();
        self.op.apply(&self.x_bar, &mut self.kx, false);
        let problem = self.problem;
        let halfspaces = &self.halfspaces;
        self.y
            .par_chunks_mut(lay.dual_block)
            .zip(self.sigma.par_chunks(lay.dual_block))
            .zip(self.kx.par_chunks(lay.dual_block))
            .enumerate()
            .try_for_each(|(px, ((yb, sb), kb))| {
                for ((y, &s), &k) in yb.iter_mut().zip(sb).zip(kb) {
                    *y += s * k;
                }
                project_dual_pixel(problem, &lay, halfspaces, px, yb)
            })?;

        self.op.apply_adjoint(&self.y, &mut self.kty, false);
        let costs = match &problem.data {
            DataModel::LabelCosts(c) => Some(c.as_slice()),
            DataModel::Convexified(_) => None,
        };
        let l = lay.labels;
        self.x
            .par_chunks_mut(lay.primal_block)
            .zip(self.x_bar.par_chunks_mut(lay.primal_block))
            .zip(self.tau.par_chunks(lay.primal_block))
            .zip(self.kty.par_chunks(lay.primal_block))
            .enumerate()
            .for_each(|(px, (((xb, xbar), tb), kb))| {
                xbar.copy_from_slice(xb);
                for ((x, &t), &k) in xb.iter_mut().zip(tb).zip(kb) {
                    *x -= t * k;
                }
                if let Some(c) = costs {
                    for k in 0..l {
                        xb[lay.v + k] -= tb[lay.v + k] * c[px * l + k];
                    }
                }
                let mut scratch = Vec::with_capacity(l);
                project_simplex_in_place(&mut xb[lay.v..lay.v + l], &mut scratch);
                for (b, &x) in xbar.iter_mut().zip(xb.iter()) {
                    *b = x + x - *b;
                }
            });
        self.iterations += 1;
        Ok(())
    }

    /// Runs until the certified relative gap drops below `gap_tol` or
    /// `max_iter` iterations have been taken.
    pub fn run(&mut self, options: &SolverOptions<T>) -> Result<Solution<T>> {
        let start = Instant::now();
        let every = options.check_every.max(1);
        let mut trace = Vec::new();
        let mut converged = false;
        // best certified bounds so far; the returned field is the one whose
        // restored point attains `best.primal`
        let mut best: Option<GapReport<T>> = None;
        let mut best_v: Option<Vec<T>> = None;
        let checked = |solver: &Self, best: &mut Option<GapReport<T>>, best_v: &mut Option<Vec<T>>| {
            let g = solver.certify();
            let b = best.get_or_insert(g);
            if g.primal <= b.primal || best_v.is_none() {
                if g.primal.is_finite() {
                    *best_v = Some(solver.field());
                }
                b.primal = b.primal.min(g.primal);
            }
            b.dual = b.dual.max(g.dual);
            b.relative = if b.primal.is_finite() { (b.primal - b.dual) / T::one().max(b.primal.abs()) } else { T::infinity() };
            *b
        };
        while self.iterations < options.max_iter {
            self.step()?;
            if self.iterations % every == 0 || self.iterations == options.max_iter {
                let g = checked(self, &mut best, &mut best_v);
                trace.push(TraceEntry { iteration: self.iterations, primal: g.primal, dual: g.dual, relative_gap: g.relative });
                if g.relative < options.gap_tol {
                    converged = true;
                    break;
                }
            }
        }
        let final_gap = match best {
            Some(g) => g,
            None => checked(self, &mut best, &mut best_v),
        };
        Ok(Solution {
            v: best_v.unwrap_or_else(|| self.field()),
            labels: self.op.layout.labels,
            diagnostics: Diagnostics {
                iterations: self.iterations,
                converged,
                final_gap,
                norm_estimate: self.norm_estimate,
                trace,
                seconds: start.elapsed().as_secs_f64(),
            },
        })
    }
}

/// Builds a solver and runs it.
pub fn solve<T: Real>(problem: &LiftedProblem<T>, options: &SolverOptions<T>) -> Result<Solution<T>> {
    Solver::new(problem, options)?.run(options)
}

fn ball_norm(kind: RegularizerKind) -> BallNorm {
    match kind {
        RegularizerKind::TvNuclear => BallNorm::Spectral,
        _ => BallNorm::Frobenius,
    }
}

fn project_dual_pixel<T: Real>(
    problem: &LiftedProblem<T>,
    lay: &Layout,
    halfspaces: &[(Vec<T>, Vec<T>)],
    px: usize,
    yb: &mut [T],
) -> Result<()> {
    let (s, d) = (lay.s, lay.d);
    let sd = s * d;
    let reg = &problem.regularizer;
    for t in 0..lay.simplices {
        if lay.sublabel {
            let a = yb[lay.a + t];
            let gblock = &mut yb[lay.gg + t * sd..lay.gg + (t + 1) * sd];
            let a = reg.project_epi_conjugate_in_place(gblock, s, d, a);
            yb[lay.a + t] = a;
            let mut buf = [T::zero(); 4];
            buf[..s].copy_from_slice(&yb[lay.g + t * s..lay.g + (t + 1) * s]);
            buf[s] = yb[lay.b + t];
            let (normals, offsets) = &halfspaces[px * lay.simplices + t];
            project_halfspaces_in_place(&mut buf[..s + 1], s + 1, normals, offsets)?;
            yb[lay.g + t * s..lay.g + (t + 1) * s].copy_from_slice(&buf[..s]);
            yb[lay.b + t] = buf[s];
        } else {
            let gblock = &mut yb[lay.gg + t * sd..lay.gg + (t + 1) * sd];
            project_ball_in_place(gblock, s, d, reg.lambda, ball_norm(reg.kind));
        }
    }
    Ok(())
}

/// Diagonal steps `τⱼ = 1/Σᵢ|Kᵢⱼ|`, `σᵢ = 1/Σⱼ|Kᵢⱼ|`, made uniform over every
/// block that is projected jointly (lowering a step keeps the method valid).
fn diagonal_steps<T: Real>(op: &Operator<T>) -> (Vec<T>, Vec<T>) {
    let lay = &op.layout;
    let ones_x = vec![T::one(); op.primal_len()];
    let ones_y = vec![T::one(); op.dual_len()];
    let mut rows = vec![T::zero(); op.dual_len()];
    let mut cols = vec![T::zero(); op.primal_len()];
    op.apply(&ones_x, &mut rows, true);
    op.apply_adjoint(&ones_y, &mut cols, true);
    let inv = |v: T| if v > T::zero() { T::one() / v } else { T::one() };
    let mut sigma: Vec<T> = rows.into_iter().map(inv).collect();
    let mut tau: Vec<T> = cols.into_iter().map(inv).collect();
    let uniform = |v: &mut [T], idx: &[usize]| {
        let m = idx.iter().map(|&i| v[i]).fold(T::infinity(), T::min);
        for &i in idx {
            v[i] = m;
        }
    };
    let (s, d) = (lay.s, lay.d);
    for px in 0..op.grid.num_pixels() {
        let yo = px * lay.dual_block;
        for t in 0..lay.simplices {
            let mut idx: Vec<usize> = (0..s * d).map(|i| yo + lay.gg + t * s * d + i).collect();
            if lay.sublabel {
                idx.push(yo + lay.a + t);
                uniform(&mut sigma, &idx);
                let mut idx: Vec<usize> = (0..s).map(|i| yo + lay.g + t * s + i).collect();
                idx.push(yo + lay.b + t);
                uniform(&mut sigma, &idx);
            } else {
                uniform(&mut sigma, &idx);
            }
        }
        let xo = px * lay.primal_block;
        let idx: Vec<usize> = (0..lay.labels).map(|k| xo + lay.v + k).collect();
        uniform(&mut tau, &idx);
    }
    (tau, sigma)
}
