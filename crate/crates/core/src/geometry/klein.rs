//! Klein bottle as the figure-8 immersion in `R³`.
//!
//! Parameters `(θ, v) ∈ [0, 2π)²` with the orientation-reversing gluing
//! `(θ + 2π, v) ~ (θ, −v)`:
//!
//! ```text
//! w(θ, v) = a (cos(θ/2) sin v − sin(θ/2) sin 2v)
//! f(θ, v) = ((r + w) cos θ, (r + w) sin θ, a (sin(θ/2) sin v + cos(θ/2) sin 2v))
//! ```
//!
//! Exact geodesics on the immersion are not available in closed form, so the
//! surface provides controlled approximations:
//!
//! * the closest-point map is Gauss–Newton over the parameters, seeded from the
//!   nearest sample of a dense parameter grid;
//! * geodesic distances come from Dijkstra on a fine auxiliary grid with
//!   16-neighbourhoods, with Euclidean straightening near both endpoints;
//! * `log`/`exp` act through the parameter chart at the base point, so that
//!   `exp(z, log(z, y)) = y` holds exactly but `|log(z, y)|` is only a local
//!   approximation of the geodesic distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::{dist_euclid, Real};

const SEED_RES: usize = 256;
const AUX_RES: usize = 128;
const BUCKET: f64 = 0.1;

/// Lookup tables and maps for the immersed Klein surface.
#[derive(Debug)]
pub struct KleinSurface<T: Real> {
    radius: T,
    tube: T,
    seed_pts: Vec<[T; 3]>,
    seed_spacing: T,
    buckets: BucketGrid<T>,
    aux_pts: Vec<[T; 3]>,
    aux_adj: Vec<Vec<(u32, T)>>,
}

impl<T: Real> Default for KleinSurface<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> KleinSurface<T> {
    /// Radii `r = 1.5`, `a = 0.5`.
    pub fn new() -> Self {
        Self::with_radii(T::lit(1.5), T::lit(0.5))
    }

    pub fn with_radii(radius: T, tube: T) -> Self {
        let mut s = KleinSurface {
            radius,
            tube,
            seed_pts: Vec::new(),
            seed_spacing: T::zero(),
            buckets: BucketGrid::empty(),
            aux_pts: Vec::new(),
            aux_adj: Vec::new(),
        };
        let step = T::TAU() / T::of_usize(SEED_RES);
        s.seed_pts = (0..SEED_RES * SEED_RES)
            .map(|k| s.point(T::of_usize(k / SEED_RES) * step, T::of_usize(k % SEED_RES) * step))
            .collect();
        s.seed_spacing = (0..SEED_RES * SEED_RES)
            .map(|k| {
                let (i, j) = (k / SEED_RES, k % SEED_RES);
                let right = if i + 1 < SEED_RES { (i + 1) * SEED_RES + j } else { (SEED_RES - j) % SEED_RES };
                let up = i * SEED_RES + (j + 1) % SEED_RES;
                dist_euclid(&s.seed_pts[k], &s.seed_pts[right]).max(dist_euclid(&s.seed_pts[k], &s.seed_pts[up]))
            })
            .fold(T::zero(), T::max);
        s.buckets = BucketGrid::build(&s.seed_pts, T::lit(BUCKET));

        let astep = T::TAU() / T::of_usize(AUX_RES);
        s.aux_pts = (0..AUX_RES * AUX_RES)
            .map(|k| s.point(T::of_usize(k / AUX_RES) * astep, T::of_usize(k % AUX_RES) * astep))
            .collect();
        const OFFSETS: [(i64, i64); 16] = [
            (1, 0), (-1, 0), (0, 1), (0, -1),
            (1, 1), (1, -1), (-1, 1), (-1, -1),
            (1, 2), (1, -2), (-1, 2), (-1, -2),
            (2, 1), (2, -1), (-2, 1), (-2, -1),
        ];
        s.aux_adj = (0..AUX_RES * AUX_RES)
            .map(|k| {
                let (i, j) = ((k / AUX_RES) as i64, (k % AUX_RES) as i64);
                OFFSETS
                    .iter()
                    .map(|&(di, dj)| {
                        let n = aux_index(i + di, j + dj);
                        (n as u32, dist_euclid(&s.aux_pts[k], &s.aux_pts[n]))
                    })
                    .collect()
            })
            .collect();
        s
    }

    /// The immersion `f(θ, v)`.
    pub fn point(&self, theta: T, v: T) -> [T; 3] {
        let (r, a) = (self.radius, self.tube);
        let half = theta / T::lit(2.0);
        let (sh, ch) = half.sin_cos();
        let (sv, s2v) = (v.sin(), (v + v).sin());
        let w = a * (ch * sv - sh * s2v);
        let (st, ct) = theta.sin_cos();
        [(r + w) * ct, (r + w) * st, a * (sh * sv + ch * s2v)]
    }

    /// Columns `∂f/∂θ`, `∂f/∂v`.
    pub fn jacobian(&self, theta: T, v: T) -> [[T; 3]; 2] {
        let (r, a) = (self.radius, self.tube);
        let two = T::lit(2.0);
        let half = theta / two;
        let (sh, ch) = half.sin_cos();
        let (sv, cv) = v.sin_cos();
        let (s2v, c2v) = (v + v).sin_cos();
        let w = a * (ch * sv - sh * s2v);
        let w_t = a * (-sh * sv - ch * s2v) / two;
        let w_v = a * (ch * cv - two * sh * c2v);
        let (st, ct) = theta.sin_cos();
        let z_t = a * (ch * sv - sh * s2v) / two;
        let z_v = a * (sh * cv + two * ch * c2v);
        [
            [w_t * ct - (r + w) * st, w_t * st + (r + w) * ct, z_t],
            [w_v * ct, w_v * st, z_v],
        ]
    }

    /// Parameters of the closest surface point to `y`.
    ///
    /// Near the self-intersection of the immersion the nearest seed may sit on
    /// the wrong sheet, so every seed cluster within one grid spacing of the
    /// nearest distance is refined and the best result kept.
    pub fn closest_param(&self, y: &[T]) -> (T, T) {
        let mut best = (T::zero(), T::zero());
        let mut best_cost = T::infinity();
        for k in self.seed_candidates(y) {
            let (p, cost) = self.refine_param(k, y);
            if cost < best_cost {
                best_cost = cost;
                best = p;
            }
        }
        best
    }

    fn seed_param(k: usize) -> (T, T) {
        let step = T::TAU() / T::of_usize(SEED_RES);
        (T::of_usize(k / SEED_RES) * step, T::of_usize(k % SEED_RES) * step)
    }

    /// Nearest seed plus the nearest representative of every other seed
    /// cluster within one grid spacing of it.
    fn seed_candidates(&self, y: &[T]) -> Vec<usize> {
        let k0 = self.buckets.nearest(&self.seed_pts, y);
        let d0 = dist_euclid(&self.seed_pts[k0], y);
        let mut near = self.buckets.within(&self.seed_pts, y, d0 + self.seed_spacing);
        near.sort_by(|&a, &b| {
            dist_euclid(&self.seed_pts[a], y)
                .partial_cmp(&dist_euclid(&self.seed_pts[b], y))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let sep = T::lit(8.0) * T::TAU() / T::of_usize(SEED_RES);
        let mut picked = vec![k0];
        for k in near {
            let pk = Self::seed_param(k);
            if !picked.iter().any(|&p| params_close(Self::seed_param(p), pk, sep)) {
                picked.push(k);
            }
        }
        picked
    }

    /// Levenberg–Marquardt from seed `k`; returns parameters and squared
    /// residual.
    fn refine_param(&self, k: usize, y: &[T]) -> ((T, T), T) {
        let (mut th, mut v) = Self::seed_param(k);
        let resid = |th: T, v: T| {
            let p = self.point(th, v);
            [p[0] - y[0], p[1] - y[1], p[2] - y[2]]
        };
        let mut r = resid(th, v);
        let mut cost: T = r.iter().map(|&x| x * x).sum();
        let mut mu = T::lit(1e-6);
        for _ in 0..50 {
            let jac = self.jacobian(th, v);
            let (a11, a12, a22) = (
                jac[0].iter().map(|&x| x * x).sum::<T>(),
                jac[0].iter().zip(&jac[1]).map(|(&x, &y)| x * y).sum::<T>(),
                jac[1].iter().map(|&x| x * x).sum::<T>(),
            );
            let g1: T = jac[0].iter().zip(&r).map(|(&x, &y)| x * y).sum();
            let g2: T = jac[1].iter().zip(&r).map(|(&x, &y)| x * y).sum();
            let mut accepted = false;
            for _ in 0..20 {
                let (b11, b22) = (a11 + mu, a22 + mu);
                let det = b11 * b22 - a12 * a12;
                let d1 = -(b22 * g1 - a12 * g2) / det;
                let d2 = -(b11 * g2 - a12 * g1) / det;
                let rn = resid(th + d1, v + d2);
                let cn: T = rn.iter().map(|&x| x * x).sum();
                if cn <= cost {
                    th += d1;
                    v += d2;
                    let small = d1.abs() + d2.abs() <= T::epsilon() * T::lit(16.0);
                    r = rn;
                    cost = cn;
                    mu = (mu / T::lit(10.0)).max(T::lit(1e-12));
                    accepted = true;
                    if small {
                        return (normalize_param(th, v), cost);
                    }
                    break;
                }
                mu *= T::lit(10.0);
            }
            if !accepted {
                break;
            }
        }
        (normalize_param(th, v), cost)
    }

    pub fn project(&self, y: &[T]) -> Vec<T> {
        let (th, v) = self.closest_param(y);
        self.point(th, v).to_vec()
    }

    /// Shortest parameter displacement from `from` to any glued copy of `to`.
    ///
    /// Length is measured in the parameter plane; the Jacobian varies too much
    /// over the surface for the local metric to rank far-apart copies.
    pub fn param_delta(&self, from: (T, T), to: (T, T)) -> (T, T) {
        let tau = T::TAU();
        let mut best = (T::zero(), T::zero());
        let mut best_len = T::infinity();
        for kt in -1i32..=1 {
            let th = to.0 + T::lit(kt as f64) * tau;
            let v0 = if kt % 2 != 0 { -to.1 } else { to.1 };
            for kv in -2i32..=2 {
                let d = (th - from.0, v0 + T::lit(kv as f64) * tau - from.1);
                let len = d.0 * d.0 + d.1 * d.1;
                if len < best_len {
                    best_len = len;
                    best = d;
                }
            }
        }
        best
    }

    /// Chart logarithm: the Jacobian at `z` applied to the shortest parameter
    /// displacement towards `y`.
    pub fn log(&self, z: &[T], y: &[T]) -> Vec<T> {
        let pz = self.closest_param(z);
        let py = self.closest_param(y);
        let d = self.param_delta(pz, py);
        let jac = self.jacobian(pz.0, pz.1);
        (0..3).map(|c| jac[0][c] * d.0 + jac[1][c] * d.1).collect()
    }

    /// Chart exponential: least-squares parameter step for `v`, then `f`.
    pub fn exp(&self, z: &[T], v: &[T]) -> Vec<T> {
        let pz = self.closest_param(z);
        let jac = self.jacobian(pz.0, pz.1);
        let a11: T = jac[0].iter().map(|&x| x * x).sum();
        let a12: T = jac[0].iter().zip(&jac[1]).map(|(&x, &y)| x * y).sum();
        let a22: T = jac[1].iter().map(|&x| x * x).sum();
        let b1: T = jac[0].iter().zip(v).map(|(&x, &y)| x * y).sum();
        let b2: T = jac[1].iter().zip(v).map(|(&x, &y)| x * y).sum();
        let det = a11 * a22 - a12 * a12;
        let d1 = (a22 * b1 - a12 * b2) / det;
        let d2 = (a11 * b2 - a12 * b1) / det;
        let (th, vv) = normalize_param(pz.0 + d1, pz.1 + d2);
        self.point(th, vv).to_vec()
    }

    /// Approximate geodesic distance (graph Dijkstra on the auxiliary grid).
    pub fn geodesic_distance(&self, z: &[T], y: &[T]) -> T {
        self.distance_field(z).dist_to(y)
    }

    pub fn distance_field(&self, source: &[T]) -> KleinDistanceField<'_, T> {
        let ps = self.closest_param(source);
        let src = self.point(ps.0, ps.1).to_vec();
        let n = AUX_RES * AUX_RES;
        let mut dist = vec![T::infinity(); n];
        let mut heap = BinaryHeap::new();
        for node in self.window(ps) {
            let d = dist_euclid(&self.aux_pts[node], &src);
            if d < dist[node] {
                dist[node] = d;
                heap.push(HeapItem { d: d.to_f64_lossy(), node });
            }
        }
        while let Some(HeapItem { d, node }) = heap.pop() {
            if d > dist[node].to_f64_lossy() {
                continue;
            }
            let base = dist[node];
            for &(nb, w) in &self.aux_adj[node] {
                let nd = base + w;
                let nb = nb as usize;
                if nd < dist[nb] {
                    dist[nb] = nd;
                    heap.push(HeapItem { d: nd.to_f64_lossy(), node: nb });
                }
            }
        }
        KleinDistanceField { surface: self, source: src, source_param: ps, dist }
    }

    /// Auxiliary nodes in the 4x4 window around a parameter point.
    fn window(&self, p: (T, T)) -> impl Iterator<Item = usize> {
        let step = T::TAU() / T::of_usize(AUX_RES);
        let i0 = (p.0 / step).floor().to_f64_lossy() as i64;
        let j0 = (p.1 / step).floor().to_f64_lossy() as i64;
        (-1..3).flat_map(move |di| (-1..3).map(move |dj| aux_index(i0 + di, j0 + dj)))
    }
}

/// Distances on the Klein surface from one source.
pub struct KleinDistanceField<'a, T: Real> {
    surface: &'a KleinSurface<T>,
    source: Vec<T>,
    source_param: (T, T),
    dist: Vec<T>,
}

impl<T: Real> KleinDistanceField<'_, T> {
    pub fn dist_to(&self, y: &[T]) -> T {
        let s = self.surface;
        let py = s.closest_param(y);
        let yp = s.point(py.0, py.1);
        let mut best = s
            .window(py)
            .map(|n| self.dist[n] + dist_euclid(&s.aux_pts[n], &yp))
            .fold(T::infinity(), T::min);
        let step = T::TAU() / T::of_usize(AUX_RES);
        if params_close(self.source_param, py, step + step) {
            best = best.min(dist_euclid(&self.source, &yp));
        }
        best
    }
}

/// Canonical parameters: `θ ∈ [0, 2π)`, `v ∈ [0, 2π)` under the gluing
/// `(θ + 2π, v) ~ (θ, −v)`.
pub fn normalize_param<T: Real>(mut th: T, mut v: T) -> (T, T) {
    let tau = T::TAU();
    while th >= tau {
        th -= tau;
        v = -v;
    }
    while th < T::zero() {
        th += tau;
        v = -v;
    }
    v = v % tau;
    if v < T::zero() {
        v += tau;
    }
    if v >= tau {
        v -= tau;
    }
    (th, v)
}

/// Whether some glued copy of `b` lies within `tol` of `a` in both
/// parameters. Symmetric in `a` and `b`.
fn params_close<T: Real>(a: (T, T), b: (T, T), tol: T) -> bool {
    let tau = T::TAU();
    (-1i32..=1).any(|kt| {
        let th = b.0 + T::lit(kt as f64) * tau;
        let v0 = if kt % 2 != 0 { -b.1 } else { b.1 };
        (th - a.0).abs() <= tol
            && (-1i32..=1).any(|kv| (v0 + T::lit(kv as f64) * tau - a.1).abs() <= tol)
    })
}

fn aux_index(i: i64, j: i64) -> usize {
    let n = AUX_RES as i64;
    let k = i.div_euclid(n);
    let i = i.rem_euclid(n);
    let j = if k.rem_euclid(2) == 1 { -j } else { j };
    (i * n + j.rem_euclid(n)) as usize
}

struct HeapItem {
    d: f64,
    node: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.d.total_cmp(&self.d)
    }
}

/// Uniform bucket grid over a fixed point set for nearest-neighbour queries.
#[derive(Debug)]
struct BucketGrid<T: Real> {
    lo: [T; 3],
    h: T,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl<T: Real> BucketGrid<T> {
    fn empty() -> Self {
        BucketGrid { lo: [T::zero(); 3], h: T::one(), dims: [0; 3], cells: Vec::new() }
    }

    fn build(pts: &[[T; 3]], h: T) -> Self {
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for p in pts {
            for c in 0..3 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        let dims = [0, 1, 2].map(|c| ((hi[c] - lo[c]) / h).floor().to_f64_lossy() as usize + 1);
        let mut g = BucketGrid { lo, h, dims, cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]] };
        for (k, p) in pts.iter().enumerate() {
            let c = g.cell_of(p);
            let idx = g.flat(c);
            g.cells[idx].push(k as u32);
        }
        g
    }

    fn cell_of(&self, p: &[T]) -> [i64; 3] {
        [0, 1, 2].map(|c| {
            let k = ((p[c] - self.lo[c]) / self.h).floor().to_f64_lossy() as i64;
            k.clamp(0, self.dims[c] as i64 - 1)
        })
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        (c[0] as usize * self.dims[1] + c[1] as usize) * self.dims[2] + c[2] as usize
    }

    /// Indices of all points within `radius` of `q`.
    fn within(&self, pts: &[[T; 3]], q: &[T], radius: T) -> Vec<usize> {
        let lo = self.cell_of(&[q[0] - radius, q[1] - radius, q[2] - radius]);
        let hi = self.cell_of(&[q[0] + radius, q[1] + radius, q[2] + radius]);
        let mut out = Vec::new();
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    for &k in &self.cells[self.flat([x, y, z])] {
                        if dist_euclid(&pts[k as usize], q) <= radius {
                            out.push(k as usize);
                        }
                    }
                }
            }
        }
        out
    }

    fn nearest(&self, pts: &[[T; 3]], q: &[T]) -> usize {
        let center = self.cell_of(q);
        let max_ring = *self.dims.iter().max().unwrap() as i64;
        let mut best = usize::MAX;
        let mut best_d = T::infinity();
        for ring in 0..=max_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let c = [center[0] + dx, center[1] + dy, center[2] + dz];
                        if (0..3).any(|k| c[k] < 0 || c[k] >= self.dims[k] as i64) {
                            continue;
                        }
                        for &k in &self.cells[self.flat(c)] {
                            let d = dist_euclid(&pts[k as usize], q);
                            if d < best_d || (d == best_d && (k as usize) < best) {
                                best_d = d;
                                best = k as usize;
                            }
                        }
                    }
                }
            }
            if best != usize::MAX && best_d <= T::of_usize(ring as usize) * self.h {
                break;
            }
        }
        best
    }
}
