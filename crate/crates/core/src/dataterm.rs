//! Sublabel-accurate data terms.
//!
//! For every pixel and simplex the cost `ρ(x, ·)` is sampled on a barycentric
//! subgrid of the simplex (mapped onto `ℳ` by the closest-point map), and the
//! samples are replaced by their lower convex hull `ρ̂`. In local simplex
//! coordinates `w` (relative to the first vertex) the conjugate is
//! `ρ̂*(g) = max_j ⟨w_j, g⟩ − h_j` over hull vertices `(w_j, h_j)`, so the
//! constraint `ρ̂*(g) ≤ b` is a small halfspace intersection in `(g, b)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::SimplexFrame;
use crate::geometry::{ManifoldGeometry, Triangulation};
use crate::proxkit::{project_halfspaces_in_place, HalfspaceSet};
use crate::scalar::Real;

/// Cost assigned to known inpainting pixels away from the observation.
pub const INPAINT_CAP: f64 = 1.0e4;

/// Observations defining `ρ(x, z)`.
#[derive(Debug, Clone)]
pub enum DataTermKind<T> {
    /// `ρ(x, z) = d(I(x), z)²`.
    QuadraticDistance { observed: Vec<Vec<T>> },
    /// Hard constraint to the observation where `mask` is false; `ρ ≡ 0`
    /// where it is true (the region to fill in).
    InpaintingIndicator { observed: Vec<Vec<T>>, mask: Vec<bool> },
    /// `ρ(x, z) = Σᵢ λᵢ d(xᵢ, z)²` with per-pixel weighted anchors.
    WeightedDistance { anchors: Vec<Vec<(T, Vec<T>)>> },
}

#[derive(Debug, Clone)]
pub struct DataTermSpec<T> {
    pub kind: DataTermKind<T>,
    pub subgrid_level: usize,
}

impl<T: Real> DataTermSpec<T> {
    /// Validates observations against the geometry (points within `1e-6` of
    /// `ℳ`, matching mask length, `subgrid_level ≥ 1`).
    pub fn new(kind: DataTermKind<T>, subgrid_level: usize, geometry: &ManifoldGeometry<T>) -> Result<Self> {
        if subgrid_level == 0 {
            return Err(Error::InvalidArgument("subgrid level must be at least 1".into()));
        }
        let tol = T::lit(1e-6);
        let check = |z: &[T]| -> Result<()> {
            if z.len() != geometry.embed_dim() {
                return Err(Error::Shape(format!("observation has {} coordinates, expected {}", z.len(), geometry.embed_dim())));
            }
            let off = geometry.off_manifold_distance(z);
            if !(off <= tol) {
                return Err(Error::InvalidArgument(format!("observation is {:e} away from the manifold", off.to_f64_lossy())));
            }
            Ok(())
        };
        match &kind {
            DataTermKind::QuadraticDistance { observed } => observed.iter().try_for_each(|z| check(z))?,
            DataTermKind::InpaintingIndicator { observed, mask } => {
                if mask.len() != observed.len() {
                    return Err(Error::Shape(format!("mask has {} entries for {} pixels", mask.len(), observed.len())));
                }
                observed.iter().try_for_each(|z| check(z))?;
            }
            DataTermKind::WeightedDistance { anchors } => {
                for pixel in anchors {
                    if pixel.is_empty() {
                        return Err(Error::InvalidArgument("pixel without anchors".into()));
                    }
                    for (w, z) in pixel {
                        if !(*w >= T::zero()) {
                            return Err(Error::InvalidArgument("anchor weights must be nonnegative".into()));
                        }
                        check(z)?;
                    }
                }
            }
        }
        Ok(DataTermSpec { kind, subgrid_level })
    }

    pub fn num_pixels(&self) -> usize {
        match &self.kind {
            DataTermKind::QuadraticDistance { observed } => observed.len(),
            DataTermKind::InpaintingIndicator { observed, .. } => observed.len(),
            DataTermKind::WeightedDistance { anchors } => anchors.len(),
        }
    }
}

/// Multi-indices `β ∈ N^{s+1}` with `|β| = k`, lexicographically ordered.
pub fn subgrid_multi_indices(s: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, left: usize, slots: usize, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for b in (0..=left).rev() {
            prefix.push(b);
            rec(prefix, left - b, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), k, s + 1, &mut out);
    out
}

/// Subgrid of one simplex: local coordinates and points on `ℳ`.
#[derive(Debug, Clone)]
pub struct SubgridSamples<T> {
    /// `C(k+s, s) × s`, row-major.
    pub local: Vec<T>,
    /// Closest-point images on `ℳ`.
    pub points: Vec<Vec<T>>,
}

impl<T: Real> SubgridSamples<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Level-`k` barycentric subgrid of simplex `t`.
pub fn subgrid_samples<T: Real>(tri: &Triangulation<T>, frame: &SimplexFrame<T>, t: usize, k: usize) -> SubgridSamples<T> {
    let s = tri.dim();
    let n = tri.embed_dim();
    let pts = tri.simplex_points(t);
    let kk = T::of_usize(k);
    let mut local = Vec::new();
    let mut points = Vec::new();
    for beta in subgrid_multi_indices(s, k) {
        let lam: Vec<T> = beta.iter().map(|&b| T::of_usize(b) / kk).collect();
        for i in 0..s {
            local.push((0..s).map(|j| frame.edges[i * s + j] * lam[j + 1]).sum());
        }
        let z: Vec<T> = (0..n).map(|c| (0..=s).map(|j| lam[j] * pts[j][c]).sum()).collect();
        points.push(tri.geometry().project(&z));
    }
    SubgridSamples { local, points }
}

/// Evaluates `ρ(x, ·)` for one pixel at many points.
fn pixel_costs<T: Real>(spec: &DataTermSpec<T>, geometry: &ManifoldGeometry<T>, x: usize, groups: &[&[Vec<T>]]) -> Vec<Vec<T>> {
    let sq_dists = |src: &[T]| -> Vec<Vec<T>> {
        let field = geometry.distance_field(src);
        groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|z| {
                        let d = field.dist_to(z);
                        d * d
                    })
                    .collect()
            })
            .collect()
    };
    match &spec.kind {
        DataTermKind::QuadraticDistance { observed } => sq_dists(&observed[x]),
        DataTermKind::WeightedDistance { anchors } => {
            let mut acc: Vec<Vec<T>> = groups.iter().map(|g| vec![T::zero(); g.len()]).collect();
            for (w, z) in &anchors[x] {
                for (a, d) in acc.iter_mut().zip(sq_dists(z)) {
                    for (ai, di) in a.iter_mut().zip(d) {
                        *ai += *w * di;
                    }
                }
            }
            acc
        }
        DataTermKind::InpaintingIndicator { observed, mask } => {
            if mask[x] {
                return groups.iter().map(|g| vec![T::zero(); g.len()]).collect();
            }
            let d = sq_dists(&observed[x]);
            let best = d.iter().flatten().copied().fold(T::infinity(), T::min);
            // distances computed for the same point through different
            // simplices can differ in the last bits
            let tol = T::lit(1e-9).max(best * T::lit(1e-9));
            let cap = T::lit(INPAINT_CAP);
            d.into_iter()
                .map(|row| row.into_iter().map(|v| if v <= best + tol { T::zero() } else { cap }).collect())
                .collect()
        }
    }
}

/// Samples `(local coordinates, ρ)` of pixel `x` on the level-`k` subgrid of
/// simplex `t`.
///
/// For the inpainting indicator the zero set is the nearest subgrid sample
/// over the whole mesh, so this scans every simplex.
pub fn sample_data_term<T: Real>(
    spec: &DataTermSpec<T>,
    tri: &Triangulation<T>,
    frames: &[SimplexFrame<T>],
    x: usize,
    t: usize,
) -> Vec<(Vec<T>, T)> {
    let s = tri.dim();
    let k = spec.subgrid_level;
    let values = match spec.kind {
        DataTermKind::InpaintingIndicator { .. } => {
            let all: Vec<SubgridSamples<T>> =
                (0..tri.num_simplices()).map(|u| subgrid_samples(tri, &frames[u], u, k)).collect();
            let groups: Vec<&[Vec<T>]> = all.iter().map(|g| g.points.as_slice()).collect();
            pixel_costs(spec, tri.geometry(), x, &groups).swap_remove(t)
        }
        _ => {
            let g = subgrid_samples(tri, &frames[t], t, k);
            pixel_costs(spec, tri.geometry(), x, &[g.points.as_slice()]).swap_remove(0)
        }
    };
    let g = subgrid_samples(tri, &frames[t], t, k);
    values.into_iter().enumerate().map(|(i, v)| (g.local[i * s..(i + 1) * s].to_vec(), v)).collect()
}

/// Lower convex hull of one `(pixel, simplex)` sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct HullEntry<T> {
    /// `s`.
    pub dim: usize,
    /// Hull vertices, `(s + 1)` numbers each: local coordinates then height.
    pub vertices: Vec<T>,
    /// Lower facets as affine functions `w ↦ ⟨a, w⟩ + c`, stored as
    /// `(a₁, …, a_s, c)`.
    pub facets: Vec<T>,
}

impl<T: Real> HullEntry<T> {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len() / (self.dim + 1)
    }

    pub fn vertex(&self, j: usize) -> (&[T], T) {
        let m = self.dim + 1;
        (&self.vertices[j * m..j * m + self.dim], self.vertices[j * m + self.dim])
    }

    /// `ρ̂(w)`; only meaningful inside the simplex.
    pub fn eval(&self, w: &[T]) -> T {
        let m = self.dim + 1;
        self.facets
            .chunks_exact(m)
            .map(|f| f[..self.dim].iter().zip(w).map(|(&a, &b)| a * b).sum::<T>() + f[self.dim])
            .fold(T::neg_infinity(), T::max)
    }

    /// `ρ̂*(g) = max_j ⟨w_j, g⟩ − h_j`.
    pub fn conjugate(&self, g: &[T]) -> T {
        (0..self.num_vertices())
            .map(|j| {
                let (w, h) = self.vertex(j);
                w.iter().zip(g).map(|(&a, &b)| a * b).sum::<T>() - h
            })
            .fold(T::neg_infinity(), T::max)
    }

    /// `{(g, b) : ⟨w_j, g⟩ − b ≤ h_j}` in `R^{s+1}`.
    pub fn halfspaces(&self) -> HalfspaceSet<T> {
        let mut set = HalfspaceSet::new(self.dim + 1);
        let mut row = vec![T::zero(); self.dim + 1];
        for j in 0..self.num_vertices() {
            let (w, h) = self.vertex(j);
            row[..self.dim].copy_from_slice(w);
            row[self.dim] = -T::one();
            set.push(&row, h);
        }
        set
    }
}

/// Projection of `(g0, b0)` onto `{ρ̂*(g) ≤ b}`.
pub fn project_rho_conj_epi<T: Real>(entry: &HullEntry<T>, g0: &[T], b0: T) -> Result<(Vec<T>, T)> {
    let h = entry.halfspaces();
    let mut x: Vec<T> = g0.iter().copied().chain(std::iter::once(b0)).collect();
    project_halfspaces_in_place(&mut x, h.dim, &h.normals, &h.offsets)?;
    let b = x.pop().expect("nonempty");
    Ok((x, b))
}

/// Lower convex hull of samples `(w, h)` with `w ∈ R^s`.
///
/// Quickhull in `R^{s+1}` on the samples plus a sentinel point high above
/// their centroid, which keeps the point set full-dimensional when the
/// samples are coplanar (affine costs). Points within rounding distance of a
/// facet count as inside. Facets whose outward normal points down form the
/// lower hull.
pub fn convexify<T: Real>(samples: &[(Vec<T>, T)], s: usize) -> Result<HullEntry<T>> {
    let dd = s + 1;
    if samples.len() < dd || samples.iter().any(|(w, _)| w.len() != s) {
        return Err(Error::DegenerateHull);
    }
    if samples.iter().any(|(w, h)| !h.is_finite() || w.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    let mut pts: Vec<[T; 4]> = samples
        .iter()
        .map(|(w, h)| {
            let mut p = [T::zero(); 4];
            p[..s].copy_from_slice(w);
            p[s] = *h;
            p
        })
        .collect();
    let (lo, hi) = pts.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), p| (a.min(p[s]), b.max(p[s])));
    let mut sentinel = [T::zero(); 4];
    for p in &pts {
        for c in 0..s {
            sentinel[c] += p[c];
        }
    }
    for c in sentinel.iter_mut().take(s) {
        *c /= T::of_usize(pts.len());
    }
    sentinel[s] = hi + (hi - lo) + T::one();
    let sentinel_idx = pts.len();
    pts.push(sentinel);

    let facets = quickhull(&pts, dd)?;
    let mut used = vec![false; pts.len()];
    let mut entry = HullEntry { dim: s, vertices: Vec::new(), facets: Vec::new() };
    let down = -T::lit(1e-12);
    for f in &facets {
        if f.normal[s] < down {
            if f.verts[..dd].contains(&sentinel_idx) {
                continue;
            }
            for &v in &f.verts[..dd] {
                used[v] = true;
            }
            // n·p = off  ⇒  h = (off − n_w·w) / n_h
            let nh = f.normal[s];
            for c in 0..s {
                entry.facets.push(-f.normal[c] / nh);
            }
            entry.facets.push(f.offset / nh);
        }
    }
    for (i, p) in pts.iter().enumerate().take(sentinel_idx) {
        if used[i] {
            entry.vertices.extend_from_slice(&p[..dd]);
        }
    }
    if entry.facets.is_empty() {
        return Err(Error::DegenerateHull);
    }
    Ok(entry)
}

struct Facet<T> {
    verts: [usize; 4],
    normal: [T; 4],
    offset: T,
    outside: Vec<usize>,
    alive: bool,
}

fn det<T: Real>(m: &[[T; 4]], cols: &[usize]) -> T {
    match cols.len() {
        0 => T::one(),
        1 => m[0][cols[0]],
        2 => m[0][cols[0]] * m[1][cols[1]] - m[0][cols[1]] * m[1][cols[0]],
        _ => {
            let (a, b, c) = (cols[0], cols[1], cols[2]);
            m[0][a] * (m[1][b] * m[2][c] - m[1][c] * m[2][b]) - m[0][b] * (m[1][a] * m[2][c] - m[1][c] * m[2][a])
                + m[0][c] * (m[1][a] * m[2][b] - m[1][b] * m[2][a])
        }
    }
}

/// Unit normal and offset of the hyperplane through `dd` points in `R^dd`.
fn hyperplane<T: Real>(pts: &[[T; 4]], idx: &[usize], dd: usize) -> Option<([T; 4], T)> {
    let base = pts[idx[0]];
    let mut rows = [[T::zero(); 4]; 3];
    for r in 0..dd - 1 {
        for c in 0..dd {
            rows[r][c] = pts[idx[r + 1]][c] - base[c];
        }
    }
    let mut normal = [T::zero(); 4];
    let mut cols = [0usize; 3];
    for (j, nj) in normal.iter_mut().enumerate().take(dd) {
        let mut q = 0;
        for c in 0..dd {
            if c != j {
                cols[q] = c;
                q += 1;
            }
        }
        let v = det(&rows[..dd - 1], &cols[..dd - 1]);
        *nj = if j % 2 == 0 { v } else { -v };
    }
    let len = normal[..dd].iter().map(|&v| v * v).sum::<T>().sqrt();
    if !(len > T::min_positive_value()) {
        return None;
    }
    for v in normal.iter_mut().take(dd) {
        *v /= len;
    }
    let offset = (0..dd).map(|c| normal[c] * base[c]).sum();
    Some((normal, offset))
}

fn signed_dist<T: Real>(f: &Facet<T>, p: &[T; 4], dd: usize) -> T {
    (0..dd).map(|c| f.normal[c] * p[c]).sum::<T>() - f.offset
}

fn quickhull<T: Real>(pts: &[[T; 4]], dd: usize) -> Result<Vec<Facet<T>>> {
    let scale = pts.iter().flat_map(|p| p[..dd].iter()).fold(T::one(), |a, &v| a.max(v.abs()));
    let tol = T::epsilon() * T::lit(64.0) * scale;

    // initial simplex: greedily maximise distance from the current affine span
    let mut init = vec![0usize];
    for (i, p) in pts.iter().enumerate() {
        if (0..dd).map(|c| p[c]).lt((0..dd).map(|c| pts[init[0]][c])) {
            init[0] = i;
        }
    }
    let mut basis: Vec<[T; 4]> = Vec::new();
    while init.len() < dd + 1 {
        let o = pts[init[0]];
        let mut best = (T::zero(), usize::MAX, [T::zero(); 4]);
        for (i, p) in pts.iter().enumerate() {
            let mut r = [T::zero(); 4];
            for c in 0..dd {
                r[c] = p[c] - o[c];
            }
            for b in &basis {
                let d: T = (0..dd).map(|c| r[c] * b[c]).sum();
                for c in 0..dd {
                    r[c] -= d * b[c];
                }
            }
            let n = r[..dd].iter().map(|&v| v * v).sum::<T>().sqrt();
            if n > best.0 {
                best = (n, i, r);
            }
        }
        if !(best.0 > tol * T::lit(16.0)) {
            return Err(Error::DegenerateHull);
        }
        let mut b = best.2;
        for v in b.iter_mut().take(dd) {
            *v /= best.0;
        }
        basis.push(b);
        init.push(best.1);
    }
    let mut interior = [T::zero(); 4];
    for &i in &init {
        for c in 0..dd {
            interior[c] += pts[i][c] / T::of_usize(dd + 1);
        }
    }

    let make = |verts: &[usize]| -> Option<Facet<T>> {
        let (mut normal, mut offset) = hyperplane(pts, verts, dd)?;
        let side: T = (0..dd).map(|c| normal[c] * interior[c]).sum::<T>() - offset;
        if side > T::zero() {
            for v in normal.iter_mut().take(dd) {
                *v = -*v;
            }
            offset = -offset;
        }
        let mut vs = [usize::MAX; 4];
        vs[..dd].copy_from_slice(verts);
        Some(Facet { verts: vs, normal, offset, outside: Vec::new(), alive: true })
    };

    let mut facets: Vec<Facet<T>> = Vec::new();
    for skip in 0..=dd {
        let verts: Vec<usize> = init.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v).collect();
        facets.push(make(&verts).ok_or(Error::DegenerateHull)?);
    }
    for i in 0..pts.len() {
        if init.contains(&i) {
            continue;
        }
        if let Some(f) = facets.iter_mut().find(|f| signed_dist(f, &pts[i], dd) > tol) {
            f.outside.push(i);
        }
    }

    let max_rounds = 4 * pts.len() + 16;
    for _ in 0..max_rounds {
        let Some(fi) = facets.iter().position(|f| f.alive && !f.outside.is_empty()) else {
            return Ok(facets.into_iter().filter(|f| f.alive).collect());
        };
        let apex = *facets[fi]
            .outside
            .iter()
            .max_by(|&&a, &&b| {
                signed_dist(&facets[fi], &pts[a], dd).partial_cmp(&signed_dist(&facets[fi], &pts[b], dd)).unwrap()
            })
            .expect("nonempty");
        let mut ridges: Vec<([usize; 3], usize)> = Vec::new();
        let mut orphans = Vec::new();
        for f in facets.iter_mut().filter(|f| f.alive) {
            if signed_dist(f, &pts[apex], dd) <= tol {
                continue;
            }
            f.alive = false;
            orphans.append(&mut f.outside);
            for skip in 0..dd {
                let mut r = [usize::MAX; 3];
                let mut q = 0;
                for (i, &v) in f.verts[..dd].iter().enumerate() {
                    if i != skip {
                        r[q] = v;
                        q += 1;
                    }
                }
                r[..dd - 1].sort_unstable();
                match ridges.iter_mut().find(|(k, _)| *k == r) {
                    Some(e) => e.1 += 1,
                    None => ridges.push((r, 1)),
                }
            }
        }
        let first_new = facets.len();
        for (r, count) in ridges {
            if count != 1 {
                continue;
            }
            let mut verts: Vec<usize> = r[..dd - 1].to_vec();
            verts.push(apex);
            if let Some(f) = make(&verts) {
                facets.push(f);
            }
        }
        for i in orphans {
            if i == apex {
                continue;
            }
            if let Some(f) = facets[first_new..].iter_mut().find(|f| signed_dist(f, &pts[i], dd) > tol) {
                f.outside.push(i);
            }
        }
    }
    Err(Error::DegenerateHull)
}

/// Convexified data term for every `(pixel, simplex)`, pixel-major.
#[derive(Debug, Clone)]
pub struct ConvexifiedDataTerm<T> {
    pub num_pixels: usize,
    pub num_simplices: usize,
    pub entries: Vec<HullEntry<T>>,
}

impl<T: Real> ConvexifiedDataTerm<T> {
    pub fn entry(&self, x: usize, t: usize) -> &HullEntry<T> {
        &self.entries[x * self.num_simplices + t]
    }
}

/// Samples and convexifies `ρ` for all pixels (parallel over pixels).
pub fn convexify_all<T: Real>(
    spec: &DataTermSpec<T>,
    tri: &Triangulation<T>,
    frames: &[SimplexFrame<T>],
) -> Result<ConvexifiedDataTerm<T>> {
    let s = tri.dim();
    let nt = tri.num_simplices();
    let grids: Vec<SubgridSamples<T>> = (0..nt).map(|t| subgrid_samples(tri, &frames[t], t, spec.subgrid_level)).collect();
    let groups: Vec<&[Vec<T>]> = grids.iter().map(|g| g.points.as_slice()).collect();
    let per_pixel: Vec<Vec<HullEntry<T>>> = (0..spec.num_pixels())
        .into_par_iter()
        .map(|x| {
            let costs = pixel_costs(spec, tri.geometry(), x, &groups);
            costs
                .iter()
                .zip(&grids)
                .map(|(vals, g)| {
                    let samples: Vec<(Vec<T>, T)> =
                        vals.iter().enumerate().map(|(i, &v)| (g.local[i * s..(i + 1) * s].to_vec(), v)).collect();
                    convexify(&samples, s)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvexifiedDataTerm { num_pixels: spec.num_pixels(), num_simplices: nt, entries: per_pixel.into_iter().flatten().collect() })
}

/// Label-resolution data vector `(ρ(x, Zᵏ))ₖ`.
pub fn lellmann_mode_data<T: Real>(spec: &DataTermSpec<T>, tri: &Triangulation<T>, x: usize) -> Vec<T> {
    let labels = tri.vertices();
    pixel_costs(spec, tri.geometry(), x, &[labels]).swap_remove(0)
}
