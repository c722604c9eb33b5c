//! Simplicial approximations `ℳ_h` of the supported manifolds.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use super::{canonicalize_quat, normalize_or_pole, ManifoldGeometry};
use crate::error::{Error, Result};
use crate::linalg::solve_in_place;
use crate::scalar::{dist_euclid, dot, Real};

/// A simplicial mesh whose vertices (the labels) lie on a manifold.
///
/// `simplex_points(t)` gives the realised vertex positions of simplex `t`.
/// They equal the shared vertex coordinates except on SO(3), where a
/// tetrahedron is realised with a consistent choice of quaternion signs.
#[derive(Debug, Clone)]
pub struct Triangulation<T: Real> {
    geometry: ManifoldGeometry<T>,
    vertices: Vec<Vec<T>>,
    simplices: Vec<Vec<usize>>,
    points: Vec<Vec<Vec<T>>>,
}

/// Result of [`Triangulation::barycentric_locate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Located<T> {
    pub simplex: usize,
    /// Convex weights, ordered like the simplex's vertex list.
    pub weights: Vec<T>,
    /// Distance from the query to its projection onto the simplex.
    pub residual: T,
}

impl<T: Real> Triangulation<T> {
    /// Assembles a mesh from shared vertex coordinates.
    pub fn from_parts(
        geometry: ManifoldGeometry<T>,
        vertices: Vec<Vec<T>>,
        simplices: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let points = simplices
            .iter()
            .map(|s| s.iter().map(|&k| vertices[k].clone()).collect())
            .collect();
        Self::with_points(geometry, vertices, simplices, points)
    }

    fn with_points(
        geometry: ManifoldGeometry<T>,
        vertices: Vec<Vec<T>>,
        simplices: Vec<Vec<usize>>,
        points: Vec<Vec<Vec<T>>>,
    ) -> Result<Self> {
        let s = geometry.intrinsic_dim();
        let n = geometry.embed_dim();
        if vertices.iter().any(|v| v.len() != n) {
            return Err(Error::Shape(format!("vertices must have {n} coordinates")));
        }
        for simplex in &simplices {
            if simplex.len() != s + 1 || simplex.iter().any(|&k| k >= vertices.len()) {
                return Err(Error::Shape(format!("bad simplex {simplex:?}")));
            }
        }
        Ok(Triangulation { geometry, vertices, simplices, points })
    }

    /// `L` equally spaced labels on `S¹`, joined into a closed polygon.
    pub fn build_circle(labels: usize) -> Result<Self> {
        if labels < 3 {
            return Err(Error::InvalidArgument(format!("circle needs at least 3 labels, got {labels}")));
        }
        let vertices = (0..labels)
            .map(|k| {
                let (s, c) = (T::TAU() * T::of_usize(k) / T::of_usize(labels)).sin_cos();
                vec![c, s]
            })
            .collect();
        let simplices = (0..labels).map(|k| vec![k, (k + 1) % labels]).collect();
        Self::from_parts(ManifoldGeometry::Circle, vertices, simplices)
    }

    /// Regular icosahedron on `S²`, optionally refined by 1-to-4 splits with
    /// the new vertices pushed back onto the sphere.
    pub fn build_sphere2(refine: usize) -> Self {
        let phi = (T::one() + T::lit(5.0).sqrt()) / T::lit(2.0);
        let (o, l) = (T::zero(), T::one());
        let mut vertices: Vec<Vec<T>> = Vec::with_capacity(12);
        for &a in &[-l, l] {
            for &b in &[-phi, phi] {
                vertices.push(vec![o, a, b]);
            }
        }
        for &a in &[-l, l] {
            for &b in &[-phi, phi] {
                vertices.push(vec![a, b, o]);
            }
        }
        for &a in &[-phi, phi] {
            for &b in &[-l, l] {
                vertices.push(vec![a, o, b]);
            }
        }
        let edge = T::lit(2.0);
        let near = |a: &[T], b: &[T]| (dist_euclid(a, b) - edge).abs() < T::lit(1e-6);
        let mut faces = Vec::with_capacity(20);
        for i in 0..12 {
            for j in i + 1..12 {
                if !near(&vertices[i], &vertices[j]) {
                    continue;
                }
                for k in j + 1..12 {
                    if near(&vertices[i], &vertices[k]) && near(&vertices[j], &vertices[k]) {
                        faces.push(outward(&vertices, [i, j, k]));
                    }
                }
            }
        }
        let mut vertices: Vec<Vec<T>> = vertices.iter().map(|v| normalize_or_pole(v)).collect();
        for _ in 0..refine {
            let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, vs: &mut Vec<Vec<T>>| {
                *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    let m: Vec<T> = vs[a].iter().zip(&vs[b]).map(|(&x, &y)| x + y).collect();
                    vs.push(normalize_or_pole(&m));
                    vs.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for &[a, b, c] in &faces {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let simplices = faces.iter().map(|f| f.to_vec()).collect();
        Self::from_parts(ManifoldGeometry::Sphere2, vertices, simplices).expect("icosahedral mesh is well formed")
    }

    /// The 600-cell with antipodal vertices identified: 60 rotations, 300
    /// tetrahedra.
    pub fn build_so3() -> Self {
        let phi = (T::one() + T::lit(5.0).sqrt()) / T::lit(2.0);
        let half = T::lit(0.5);
        let mut cell: Vec<Vec<T>> = Vec::with_capacity(120);
        for i in 0..4 {
            for &sg in &[T::one(), -T::one()] {
                let mut v = vec![T::zero(); 4];
                v[i] = sg;
                cell.push(v);
            }
        }
        for m in 0..16u32 {
            cell.push((0..4).map(|i| if m >> i & 1 == 1 { -half } else { half }).collect());
        }
        let base = [phi * half, half, half / phi, T::zero()];
        const EVEN_PERMS: [[usize; 4]; 12] = [
            [0, 1, 2, 3], [0, 2, 3, 1], [0, 3, 1, 2],
            [1, 0, 3, 2], [1, 2, 0, 3], [1, 3, 2, 0],
            [2, 0, 1, 3], [2, 1, 3, 0], [2, 3, 0, 1],
            [3, 0, 2, 1], [3, 1, 0, 2], [3, 2, 1, 0],
        ];
        for perm in &EVEN_PERMS {
            for m in 0..8u32 {
                let signed: Vec<T> = (0..3).map(|i| if m >> i & 1 == 1 { -base[i] } else { base[i] }).collect();
                let mut v = vec![T::zero(); 4];
                for (src, &dst) in perm.iter().enumerate() {
                    v[dst] = if src < 3 { signed[src] } else { T::zero() };
                }
                cell.push(v);
            }
        }
        debug_assert_eq!(cell.len(), 120);

        let edge = T::one() / phi;
        let adj = |a: &[T], b: &[T]| (dist_euclid(a, b) - edge).abs() < T::lit(1e-6);
        let nbrs: Vec<Vec<usize>> = (0..120)
            .map(|i| (0..120).filter(|&j| j != i && adj(&cell[i], &cell[j])).collect())
            .collect();

        // Quotient vertices in order of first appearance of their class.
        let mut class_of = vec![usize::MAX; 120];
        let mut vertices = Vec::with_capacity(60);
        for i in 0..120 {
            if class_of[i] != usize::MAX {
                continue;
            }
            let c = vertices.len();
            class_of[i] = c;
            let neg: Vec<T> = cell[i].iter().map(|&x| -x).collect();
            let j = (0..120).find(|&j| dist_euclid(&cell[j], &neg) < T::lit(1e-9)).expect("antipode present");
            class_of[j] = c;
            vertices.push(canonicalize_quat(&cell[i]));
        }

        let mut seen = BTreeMap::new();
        let mut simplices = Vec::with_capacity(300);
        let mut points = Vec::with_capacity(300);
        for a in 0..120 {
            for &b in nbrs[a].iter().filter(|&&b| b > a) {
                for &c in nbrs[b].iter().filter(|&&c| c > b) {
                    if !nbrs[a].contains(&c) {
                        continue;
                    }
                    for &d in nbrs[c].iter().filter(|&&d| d > c) {
                        if !nbrs[a].contains(&d) || !nbrs[b].contains(&d) {
                            continue;
                        }
                        let tet = [a, b, c, d];
                        let mut key: Vec<usize> = tet.iter().map(|&k| class_of[k]).collect();
                        key.sort_unstable();
                        if seen.insert(key, ()).is_none() {
                            simplices.push(tet.iter().map(|&k| class_of[k]).collect());
                            points.push(tet.iter().map(|&k| cell[k].clone()).collect());
                        }
                    }
                }
            }
        }
        Self::with_points(ManifoldGeometry::So3, vertices, simplices, points).expect("600-cell quotient is well formed")
    }

    /// `m × n` parameter grid on the Klein surface, glued with the
    /// orientation-reversing identification, `2mn` triangles.
    ///
    /// For even `n` the `v`-samples are shifted by half a step so that no two
    /// vertices land on the self-intersection circle of the immersion at the
    /// same point.
    pub fn build_klein(m: usize, n: usize) -> Result<Self> {
        Self::build_klein_on(ManifoldGeometry::klein(), m, n)
    }

    /// As [`Triangulation::build_klein`], reusing an existing Klein geometry.
    pub fn build_klein_on(geometry: ManifoldGeometry<T>, m: usize, n: usize) -> Result<Self> {
        if m < 3 || n < 3 {
            return Err(Error::InvalidArgument(format!("klein grid needs m, n >= 3, got {m}x{n}")));
        }
        let surface = match &geometry {
            ManifoldGeometry::Klein(k) => k.clone(),
            _ => return Err(Error::InvalidArgument("geometry is not the Klein surface".into())),
        };
        let even = n % 2 == 0;
        let off = if even { T::PI() / T::of_usize(n) } else { T::zero() };
        let vertices = (0..m * n)
            .map(|k| {
                let th = T::TAU() * T::of_usize(k / n) / T::of_usize(m);
                let v = T::TAU() * T::of_usize(k % n) / T::of_usize(n) + off;
                surface.point(th, v).to_vec()
            })
            .collect();
        let shift = usize::from(even);
        let idx = |i: usize, j: usize| -> usize {
            let j = j % n;
            if i == m {
                (n - (j + shift) % n) % n
            } else {
                i * n + j
            }
        };
        let mut simplices = Vec::with_capacity(2 * m * n);
        for i in 0..m {
            for j in 0..n {
                simplices.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                simplices.push(vec![idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        Self::from_parts(geometry, vertices, simplices)
    }

    /// Regular grid of labels on the box `[low, high] ⊂ R^s`, Kuhn-split into
    /// `s!` simplices per cell.
    pub fn build_flat_box(low: &[T], high: &[T], counts: &[usize]) -> Result<Self> {
        let s = low.len();
        if s == 0 || high.len() != s || counts.len() != s {
            return Err(Error::InvalidArgument("box bounds and counts must have equal nonzero length".into()));
        }
        if (0..s).any(|i| !(low[i] < high[i]) || counts[i] < 2) {
            return Err(Error::InvalidArgument("degenerate box: need low < high and counts >= 2".into()));
        }
        let total: usize = counts.iter().product();
        let unflatten = |mut k: usize| -> Vec<usize> {
            let mut c = vec![0; s];
            for i in (0..s).rev() {
                c[i] = k % counts[i];
                k /= counts[i];
            }
            c
        };
        let flatten = |c: &[usize]| c.iter().zip(counts).fold(0, |acc, (&ci, &n)| acc * n + ci);
        let vertices = (0..total)
            .map(|k| {
                unflatten(k)
                    .iter()
                    .enumerate()
                    .map(|(i, &ci)| low[i] + (high[i] - low[i]) * T::of_usize(ci) / T::of_usize(counts[i] - 1))
                    .collect()
            })
            .collect();
        let perms = permutations(s);
        let mut simplices = Vec::new();
        for k in 0..total {
            let c = unflatten(k);
            if (0..s).any(|i| c[i] + 1 >= counts[i]) {
                continue;
            }
            for p in &perms {
                let mut cur = c.clone();
                let mut simplex = vec![flatten(&cur)];
                for &axis in p {
                    cur[axis] += 1;
                    simplex.push(flatten(&cur));
                }
                simplices.push(simplex);
            }
        }
        Self::from_parts(ManifoldGeometry::Flat { dim: s }, vertices, simplices)
    }

    pub fn geometry(&self) -> &ManifoldGeometry<T> {
        &self.geometry
    }

    /// `s`.
    pub fn dim(&self) -> usize {
        self.geometry.intrinsic_dim()
    }

    /// `N`.
    pub fn embed_dim(&self) -> usize {
        self.geometry.embed_dim()
    }

    /// `L`.
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len()
    }

    pub fn vertices(&self) -> &[Vec<T>] {
        &self.vertices
    }

    pub fn vertex(&self, k: usize) -> &[T] {
        &self.vertices[k]
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    pub fn simplex(&self, t: usize) -> &[usize] {
        &self.simplices[t]
    }

    /// Realised vertex positions of simplex `t`, in simplex order.
    pub fn simplex_points(&self, t: usize) -> &[Vec<T>] {
        &self.points[t]
    }

    /// Longest Euclidean edge over all simplices.
    pub fn max_edge_length(&self) -> T {
        let mut best = T::zero();
        for pts in &self.points {
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    best = best.max(dist_euclid(&pts[i], &pts[j]));
                }
            }
        }
        best
    }

    /// Maps each `(s−1)`-face (sorted vertex indices) to its incident simplices.
    pub fn facet_incidence(&self) -> BTreeMap<Vec<usize>, Vec<usize>> {
        let mut map: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (t, simplex) in self.simplices.iter().enumerate() {
            for skip in 0..simplex.len() {
                let mut face: Vec<usize> =
                    simplex.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &k)| k).collect();
                face.sort_unstable();
                map.entry(face).or_default().push(t);
            }
        }
        map
    }

    /// Closest point of `ℳ_h` to `y`, as a simplex and convex weights.
    ///
    /// Ties between simplices go to the lowest index. On SO(3) both `y` and
    /// `−y` are tried.
    pub fn barycentric_locate(&self, y: &[T]) -> Located<T> {
        let neg: Vec<T> = y.iter().map(|&x| -x).collect();
        let queries: Vec<&[T]> = match self.geometry {
            ManifoldGeometry::So3 => vec![y, &neg],
            _ => vec![y],
        };
        let tol = T::epsilon() * T::lit(64.0);
        let mut best: Option<Located<T>> = None;
        for t in 0..self.simplices.len() {
            for q in &queries {
                let (weights, residual) = project_onto_simplex_hull(&self.points[t], q);
                if best.as_ref().map_or(true, |b| residual < b.residual - tol) {
                    best = Some(Located { simplex: t, weights, residual });
                }
            }
        }
        best.expect("triangulation has at least one simplex")
    }

    /// Writes an ASCII PLY file: vertices plus edges (`s = 1`) or triangles
    /// (`s ≥ 2`; tetrahedra contribute their four faces, each face once).
    pub fn write_ply<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.embed_dim();
        writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", self.vertices.len())?;
        for name in ["x", "y", "z", "w"].iter().take(n.max(3)) {
            writeln!(w, "property float {name}")?;
        }
        let faces: Vec<Vec<usize>> = match self.dim() {
            1 => self.simplices.clone(),
            2 => self.simplices.clone(),
            _ => self.facet_incidence().into_keys().collect(),
        };
        if self.dim() == 1 {
            writeln!(w, "element edge {}\nproperty int vertex1\nproperty int vertex2", faces.len())?;
        } else {
            writeln!(w, "element face {}\nproperty list uchar int vertex_indices", faces.len())?;
        }
        writeln!(w, "end_header")?;
        for v in &self.vertices {
            let mut coords: Vec<String> = v.iter().map(|x| format!("{}", x.to_f64_lossy())).collect();
            while coords.len() < 3 {
                coords.push("0".into());
            }
            writeln!(w, "{}", coords.join(" "))?;
        }
        for f in &faces {
            let idx: Vec<String> = f.iter().map(|k| k.to_string()).collect();
            if self.dim() == 1 {
                writeln!(w, "{}", idx.join(" "))?;
            } else {
                writeln!(w, "{} {}", f.len(), idx.join(" "))?;
            }
        }
        Ok(())
    }

    /// One line per simplex: its vertex indices, then the indices of the
    /// simplices sharing a facet with it.
    pub fn write_adjacency<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut nbrs = vec![Vec::new(); self.simplices.len()];
        for inc in self.facet_incidence().values() {
            for &a in inc {
                for &b in inc {
                    if a != b {
                        nbrs[a].push(b);
                    }
                }
            }
        }
        for (t, simplex) in self.simplices.iter().enumerate() {
            nbrs[t].sort_unstable();
            let vs: Vec<String> = simplex.iter().map(|k| k.to_string()).collect();
            let ns: Vec<String> = nbrs[t].iter().map(|k| k.to_string()).collect();
            writeln!(w, "{} : {}", vs.join(" "), ns.join(" "))?;
        }
        Ok(())
    }
}

/// Closest point to `y` in the convex hull of `pts`: weights and distance.
///
/// Enumerates faces (vertex subsets), solving the affine least-squares problem
/// on each and keeping the best feasible one.
fn project_onto_simplex_hull<T: Real>(pts: &[Vec<T>], y: &[T]) -> (Vec<T>, T) {
    let k = pts.len();
    let mut best_w = vec![T::zero(); k];
    let mut best_r = T::infinity();
    for mask in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).collect();
        let Some(w) = affine_ls(pts, &idx, y) else { continue };
        if w.iter().any(|&x| x < -T::lit(1e-12)) {
            continue;
        }
        let mut full = vec![T::zero(); k];
        let mut sum = T::zero();
        for (&i, &x) in idx.iter().zip(&w) {
            full[i] = x.max(T::zero());
            sum += full[i];
        }
        for x in &mut full {
            *x /= sum;
        }
        let p: Vec<T> = (0..y.len()).map(|c| (0..k).map(|i| full[i] * pts[i][c]).sum()).collect();
        let r = dist_euclid(&p, y);
        if r < best_r {
            best_r = r;
            best_w = full;
        }
    }
    (best_w, best_r)
}

/// Affine weights (summing to 1) of the least-squares projection of `y` onto
/// the affine hull of `pts[idx]`.
fn affine_ls<T: Real>(pts: &[Vec<T>], idx: &[usize], y: &[T]) -> Option<Vec<T>> {
    let p0 = &pts[idx[0]];
    let m = idx.len() - 1;
    if m == 0 {
        return Some(vec![T::one()]);
    }
    let e: Vec<Vec<T>> = idx[1..].iter().map(|&i| pts[i].iter().zip(p0).map(|(&a, &b)| a - b).collect()).collect();
    let r: Vec<T> = y.iter().zip(p0).map(|(&a, &b)| a - b).collect();
    let mut a = vec![T::zero(); m * m];
    let mut b = vec![T::zero(); m];
    for i in 0..m {
        for j in 0..m {
            a[i * m + j] = dot(&e[i], &e[j]);
        }
        b[i] = dot(&e[i], &r);
    }
    solve_in_place(&mut a, &mut b, m, T::epsilon() * T::lit(100.0))?;
    let rest: T = b.iter().copied().sum();
    let mut w = vec![T::one() - rest];
    w.extend(b);
    Some(w)
}

fn outward<T: Real>(vs: &[Vec<T>], f: [usize; 3]) -> [usize; 3] {
    let [a, b, c] = f;
    let u: Vec<T> = (0..3).map(|i| vs[b][i] - vs[a][i]).collect();
    let v: Vec<T> = (0..3).map(|i| vs[c][i] - vs[a][i]).collect();
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    if dot(&n, &vs[a]) < T::zero() {
        [a, c, b]
    } else {
        f
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}
