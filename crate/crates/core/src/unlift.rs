//! Back-projection of lifted fields onto the manifold.
//!
//! A lifted value `v(x)` is a probability vector over the labels; its point on
//! `ℳ` is the weighted Riemannian center of mass of the labels, computed by
//! the fixed-point iteration `z ← exp_z(Σ λ_k log_z Z^k)` started at the label
//! of largest weight.

use rayon::prelude::*;

use crate::dataterm::{DataTermKind, DataTermSpec};
use crate::error::{Error, Result};
use crate::fem::FrameKind;
use crate::geometry::{normalize_param, KleinSurface, ManifoldGeometry, Triangulation};
use crate::regularizer::RegularizerSpec;
use crate::scalar::{norm, Real};
use crate::solver::{solve, Diagnostics, Grid, LiftedProblem, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KarcherOptions<T> {
    /// Stop once `|Σ λ_k log_z Z^k| < tol`.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for KarcherOptions<T> {
    fn default() -> Self {
        KarcherOptions { tol: T::lit(1e-10), max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KarcherResult<T> {
    pub point: Vec<T>,
    pub iterations: usize,
    /// `|Σ λ_k log_z Z^k|` at `point` over the anchors that were used.
    pub grad_norm: T,
    /// Anchors dropped because they sat on the cut locus of an iterate.
    pub skipped: Vec<usize>,
    pub converged: bool,
}

impl<T> KarcherResult<T> {
    pub fn flagged(&self) -> bool {
        !self.skipped.is_empty()
    }
}

/// `Σ λ_k d(z, Z^k)²`.
pub fn mean_energy<T: Real>(geometry: &ManifoldGeometry<T>, anchors: &[Vec<T>], weights: &[T], z: &[T]) -> T {
    anchors
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > T::zero())
        .map(|(a, &w)| {
            let d = geometry.dist(z, a);
            w * d * d
        })
        .sum()
}

fn check_weights<T: Real>(anchors: &[Vec<T>], weights: &[T]) -> Result<()> {
    if anchors.len() != weights.len() || weights.is_empty() {
        return Err(Error::Shape(format!("{} anchors for {} weights", anchors.len(), weights.len())));
    }
    let sum: T = weights.iter().copied().sum();
    if weights.iter().any(|&w| !(w >= -T::lit(1e-9))) || (sum - T::one()).abs() > T::lit(1e-9) {
        return Err(Error::InvalidArgument("weights must be nonnegative and sum to one".into()));
    }
    Ok(())
}

/// Energy the iteration descends on. It is `Σ λ_k |log_z Z^k|²`, which equals
/// [`mean_energy`] on every manifold but the Klein surface; there the chart
/// logarithm is not an isometry and the energy is measured in the flat
/// parameter plane, `Σ λ_k |δ_k|²` with `δ_k` the glued parameter
/// displacement. The Karcher step is exactly the gradient step of that energy.
pub fn chart_energy<T: Real>(geometry: &ManifoldGeometry<T>, anchors: &[Vec<T>], weights: &[T], z: &[T]) -> T {
    if let ManifoldGeometry::Klein(k) = geometry {
        let pz = k.closest_param(z);
        return anchors
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > T::zero())
            .map(|(a, &w)| {
                let (d0, d1) = k.param_delta(pz, k.closest_param(a));
                w * (d0 * d0 + d1 * d1)
            })
            .sum();
    }
    anchors
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > T::zero())
        .map(|(a, &w)| {
            let l = geometry.log_tiebreak(z, a).vector;
            w * l.iter().map(|&x| x * x).sum::<T>()
        })
        .sum()
}

/// `(Σ λ_k log_z Z^k, anchors on the cut locus)`; the weights of the skipped
/// anchors are redistributed over the others.
fn mean_direction<T: Real>(geometry: &ManifoldGeometry<T>, anchors: &[Vec<T>], weights: &[T], z: &[T]) -> (Vec<T>, Vec<usize>) {
    let mut dir = vec![T::zero(); z.len()];
    let mut skipped = Vec::new();
    let mut used = T::zero();
    for (k, (a, &w)) in anchors.iter().zip(weights).enumerate() {
        if w <= T::zero() {
            continue;
        }
        match geometry.log(z, a) {
            Ok(l) => {
                used += w;
                for (d, x) in dir.iter_mut().zip(l) {
                    *d += w * x;
                }
            }
            Err(_) => skipped.push(k),
        }
    }
    if !skipped.is_empty() && used > T::zero() {
        dir.iter_mut().for_each(|d| *d /= used);
    }
    (dir, skipped)
}

/// Weighted Karcher mean of `anchors`, started at the anchor of largest
/// weight (lowest index on ties).
///
/// Each step is the full fixed-point step, halved until the energy does not
/// increase; the energy is therefore non-increasing along the iterates.
pub fn karcher_mean<T: Real>(
    geometry: &ManifoldGeometry<T>,
    anchors: &[Vec<T>],
    weights: &[T],
    options: &KarcherOptions<T>,
) -> Result<KarcherResult<T>> {
    check_weights(anchors, weights)?;
    let start = weights
        .iter()
        .enumerate()
        .fold(0, |best, (k, &w)| if w > weights[best] { k } else { best });
    if let ManifoldGeometry::Klein(k) = geometry {
        return Ok(klein_mean(k, anchors, weights, start, options));
    }
    let mut z = anchors[start].clone();
    let mut energy = chart_energy(geometry, anchors, weights, &z);
    let mut skipped: Vec<usize> = Vec::new();
    let mut iterations = 0;
    loop {
        let (dir, skip) = mean_direction(geometry, anchors, weights, &z);
        for k in skip {
            if !skipped.contains(&k) {
                skipped.push(k);
            }
        }
        let grad_norm = norm(&dir);
        if grad_norm < options.tol || iterations >= options.max_iter {
            let converged = grad_norm < options.tol;
            return Ok(KarcherResult { point: z, iterations, grad_norm, skipped, converged });
        }
        // near the minimum the decrease is below the rounding of the energy
        let slack = energy * T::epsilon() * T::lit(8.0);
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let step: Vec<T> = dir.iter().map(|&d| t * d).collect();
            let cand = geometry.exp(&z, &step);
            let e = chart_energy(geometry, anchors, weights, &cand);
            if e <= energy + slack {
                accepted = Some((cand, e));
                break;
            }
            t = t * T::lit(0.5);
        }
        iterations += 1;
        match accepted {
            Some((cand, e)) => {
                z = cand;
                energy = e;
            }
            // no decrease along the direction: stationary up to rounding
            None => {
                return Ok(KarcherResult { point: z, iterations, grad_norm, skipped, converged: false });
            }
        }
    }
}

/// The same iteration on the Klein surface, carried out on parameters: the
/// chart exponential inverts the chart logarithm exactly, so a step is the
/// weighted mean of the glued parameter displacements. Keeping the iterate as
/// parameters avoids re-projecting it onto the immersion, which is ambiguous
/// on the self-intersection.
fn klein_mean<T: Real>(
    k: &KleinSurface<T>,
    anchors: &[Vec<T>],
    weights: &[T],
    start: usize,
    options: &KarcherOptions<T>,
) -> KarcherResult<T> {
    let targets: Vec<(T, (T, T))> =
        anchors.iter().zip(weights).filter(|(_, &w)| w > T::zero()).map(|(a, &w)| (w, k.closest_param(a))).collect();
    let direction = |p: (T, T)| {
        let mut d = (T::zero(), T::zero());
        let mut energy = T::zero();
        for &(w, q) in &targets {
            let (d0, d1) = k.param_delta(p, q);
            d.0 += w * d0;
            d.1 += w * d1;
            energy += w * (d0 * d0 + d1 * d1);
        }
        (d, energy)
    };
    let tangent_norm = |p: (T, T), d: (T, T)| {
        let jac = k.jacobian(p.0, p.1);
        norm(&(0..3).map(|c| jac[0][c] * d.0 + jac[1][c] * d.1).collect::<Vec<T>>())
    };
    let mut p = k.closest_param(&anchors[start]);
    let mut iterations = 0;
    let (mut dir, mut energy) = direction(p);
    loop {
        let grad_norm = tangent_norm(p, dir);
        if grad_norm < options.tol || iterations >= options.max_iter {
            let point = if iterations == 0 { anchors[start].clone() } else { k.point(p.0, p.1).to_vec() };
            return KarcherResult { point, iterations, grad_norm, skipped: Vec::new(), converged: grad_norm < options.tol };
        }
        let slack = energy * T::epsilon() * T::lit(8.0);
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let cand = normalize_param(p.0 + t * dir.0, p.1 + t * dir.1);
            let (d, e) = direction(cand);
            if e <= energy + slack {
                accepted = Some((cand, d, e));
                break;
            }
            t = t * T::lit(0.5);
        }
        iterations += 1;
        match accepted {
            Some((cand, d, e)) => {
                p = cand;
                dir = d;
                energy = e;
            }
            None => {
                let point = k.point(p.0, p.1).to_vec();
                return KarcherResult { point, iterations, grad_norm, skipped: Vec::new(), converged: false };
            }
        }
    }
}

/// Un-lifts a `pixels × L` field: one Karcher mean per pixel over the labels.
pub fn unlift_field<T: Real>(
    v: &[T],
    tri: &Triangulation<T>,
    options: &KarcherOptions<T>,
) -> Result<Vec<KarcherResult<T>>> {
    let l = tri.num_vertices();
    if v.len() % l != 0 {
        return Err(Error::Shape(format!("field of length {} is not a multiple of {l} labels", v.len())));
    }
    v.par_chunks(l).map(|row| karcher_mean(tri.geometry(), tri.vertices(), row, options)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions<T> {
    pub step: T,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for DescentOptions<T> {
    fn default() -> Self {
        DescentOptions { step: T::lit(0.5), tol: T::lit(1e-10), max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult<T> {
    pub point: Vec<T>,
    pub iterations: usize,
    pub grad_norm: T,
}

/// Riemannian gradient descent on `E(z) = Σ λ_i d(x_i, z)²` with gradient
/// `−2 Σ λ_i log_z x_i` and a fixed step. Purely local.
pub fn gradient_descent_mean<T: Real>(
    geometry: &ManifoldGeometry<T>,
    points: &[Vec<T>],
    weights: &[T],
    start: &[T],
    options: &DescentOptions<T>,
) -> Result<DescentResult<T>> {
    if points.len() != weights.len() || start.len() != geometry.embed_dim() {
        return Err(Error::Shape("points, weights and start do not match".into()));
    }
    let mut z = start.to_vec();
    let mut iterations = 0;
    loop {
        let mut grad = vec![T::zero(); z.len()];
        for (p, &w) in points.iter().zip(weights) {
            let l = geometry.log_tiebreak(&z, p).vector;
            for (g, x) in grad.iter_mut().zip(l) {
                *g -= T::lit(2.0) * w * x;
            }
        }
        let grad_norm = norm(&grad);
        if grad_norm < options.tol || iterations >= options.max_iter {
            return Ok(DescentResult { point: z, iterations, grad_norm });
        }
        let step: Vec<T> = grad.iter().map(|&g| -options.step * g).collect();
        z = geometry.exp(&z, &step);
        iterations += 1;
    }
}

#[derive(Debug, Clone)]
pub struct LiftedMean<T> {
    pub point: Vec<T>,
    /// `Σ λ_i d(x_i, point)²`.
    pub energy: T,
    pub karcher: KarcherResult<T>,
    pub solver: Diagnostics<T>,
}

/// Minimizes `Σ λ_i d(x_i, z)²` over the circle by lifting: a single-pixel
/// problem with the weighted distance as data term on `labels` labels, solved
/// to a certified gap and un-lifted.
pub fn lifted_mean_demo<T: Real>(
    points: &[Vec<T>],
    weights: &[T],
    labels: usize,
    subgrid: usize,
    options: &SolverOptions<T>,
) -> Result<LiftedMean<T>> {
    if points.len() != weights.len() || points.is_empty() {
        return Err(Error::Shape(format!("{} points for {} weights", points.len(), weights.len())));
    }
    let tri = Triangulation::build_circle(labels)?;
    let anchors = vec![weights.iter().copied().zip(points.iter().cloned()).collect()];
    let spec = DataTermSpec::new(DataTermKind::WeightedDistance { anchors }, subgrid, tri.geometry())?;
    let problem =
        LiftedProblem::sublabel(Grid::line(1)?, tri, FrameKind::Orthonormal, RegularizerSpec::tv(T::zero()), &spec)?;
    let sol = solve(&problem, options)?;
    let karcher = karcher_mean(problem.tri.geometry(), problem.tri.vertices(), &sol.v, &KarcherOptions::default())?;
    let energy = mean_energy(problem.tri.geometry(), points, weights, &karcher.point);
    Ok(LiftedMean { point: karcher.point.clone(), energy, karcher, solver: sol.diagnostics })
}
