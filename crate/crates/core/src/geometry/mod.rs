//! Embedded manifolds and their simplicial approximations.
//!
//! A [`ManifoldGeometry`] is an `s`-dimensional submanifold of `R^N` with
//! exponential/logarithm/distance maps and a closest-point map used to pull
//! mesh points back onto the manifold. A [`Triangulation`] is a closed (or, for
//! the flat box, bounded) simplicial mesh whose vertices are the labels.

mod klein;
mod mesh;

use std::sync::Arc;

pub use klein::{normalize_param, KleinDistanceField, KleinSurface};
pub use mesh::{Located, Triangulation};

use crate::error::{Error, Result};
use crate::scalar::{dist_euclid, dot, norm, Real};

/// Which concrete manifold a geometry models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    Circle,
    Sphere2,
    So3,
    Klein,
    FlatBox,
}

impl ManifoldKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::Circle => "circle",
            ManifoldKind::Sphere2 => "sphere2",
            ManifoldKind::So3 => "so3",
            ManifoldKind::Klein => "klein",
            ManifoldKind::FlatBox => "flat",
        }
    }
}

/// A tangent vector returned by [`ManifoldGeometry::log_tiebreak`], flagged
/// when the target sat on the cut locus and a deterministic choice was made.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentLog<T> {
    pub vector: Vec<T>,
    pub cut_locus: bool,
}

/// A concrete embedded manifold `M ⊂ R^N`.
///
/// Immutable; cheap to clone (the Klein surface shares its lookup tables).
#[derive(Debug, Clone)]
pub enum ManifoldGeometry<T: Real> {
    /// `S¹ ⊂ R²`.
    Circle,
    /// `S² ⊂ R³`.
    Sphere2,
    /// Unit quaternions modulo sign, `S³/± ⊂ R⁴`.
    So3,
    /// Figure-8 immersion of the Klein bottle in `R³`.
    Klein(Arc<KleinSurface<T>>),
    /// `R^dim` with the Euclidean metric.
    Flat { dim: usize },
}

impl<T: Real> ManifoldGeometry<T> {
    /// Klein surface with the default radii and lookup resolutions.
    pub fn klein() -> Self {
        ManifoldGeometry::Klein(Arc::new(KleinSurface::new()))
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            ManifoldGeometry::Circle => ManifoldKind::Circle,
            ManifoldGeometry::Sphere2 => ManifoldKind::Sphere2,
            ManifoldGeometry::So3 => ManifoldKind::So3,
            ManifoldGeometry::Klein(_) => ManifoldKind::Klein,
            ManifoldGeometry::Flat { .. } => ManifoldKind::FlatBox,
        }
    }

    /// `s`.
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            ManifoldGeometry::Circle => 1,
            ManifoldGeometry::Sphere2 | ManifoldGeometry::Klein(_) => 2,
            ManifoldGeometry::So3 => 3,
            ManifoldGeometry::Flat { dim } => *dim,
        }
    }

    /// `N`.
    pub fn embed_dim(&self) -> usize {
        match self {
            ManifoldGeometry::Circle => 2,
            ManifoldGeometry::Sphere2 | ManifoldGeometry::Klein(_) => 3,
            ManifoldGeometry::So3 => 4,
            ManifoldGeometry::Flat { dim } => *dim,
        }
    }

    /// Closest-point map `R^N → M`.
    ///
    /// On SO(3) the result is sign-canonicalised (first nonzero coordinate
    /// positive).
    pub fn project(&self, z: &[T]) -> Vec<T> {
        match self {
            ManifoldGeometry::Circle | ManifoldGeometry::Sphere2 => normalize_or_pole(z),
            ManifoldGeometry::So3 => canonicalize_quat(&normalize_or_pole(z)),
            ManifoldGeometry::Klein(k) => k.project(z),
            ManifoldGeometry::Flat { .. } => z.to_vec(),
        }
    }

    /// Euclidean distance from `z` to its projection onto `M`.
    ///
    /// On SO(3) both signs of a quaternion count as on the manifold.
    pub fn off_manifold_distance(&self, z: &[T]) -> T {
        match self {
            ManifoldGeometry::So3 => dist_euclid(z, &normalize_or_pole(z)),
            _ => dist_euclid(z, &self.project(z)),
        }
    }

    pub fn exp(&self, z: &[T], v: &[T]) -> Vec<T> {
        match self {
            ManifoldGeometry::Circle | ManifoldGeometry::Sphere2 => sphere_exp(z, v),
            ManifoldGeometry::So3 => canonicalize_quat(&sphere_exp(z, v)),
            ManifoldGeometry::Klein(k) => k.exp(z, v),
            ManifoldGeometry::Flat { .. } => z.iter().zip(v).map(|(&a, &b)| a + b).collect(),
        }
    }

    /// Inverse exponential map; fails with [`Error::CutLocus`] when `y` is on
    /// the cut locus of `z`.
    pub fn log(&self, z: &[T], y: &[T]) -> Result<Vec<T>> {
        let l = self.log_tiebreak(z, y);
        if l.cut_locus {
            Err(Error::CutLocus)
        } else {
            Ok(l.vector)
        }
    }

    /// Inverse exponential map that always returns a vector. On the cut locus
    /// the lexicographically smallest candidate is returned and flagged.
    pub fn log_tiebreak(&self, z: &[T], y: &[T]) -> TangentLog<T> {
        match self {
            ManifoldGeometry::Circle | ManifoldGeometry::Sphere2 => sphere_log(z, y),
            ManifoldGeometry::So3 => {
                let c = dot(z, y);
                let tol = T::tiny();
                if c.abs() <= tol {
                    let neg: Vec<T> = y.iter().map(|&x| -x).collect();
                    let a = sphere_log(z, y).vector;
                    let b = sphere_log(z, &neg).vector;
                    let vector = if lex_less(&b, &a) { b } else { a };
                    TangentLog { vector, cut_locus: true }
                } else if c < T::zero() {
                    let neg: Vec<T> = y.iter().map(|&x| -x).collect();
                    sphere_log(z, &neg)
                } else {
                    sphere_log(z, y)
                }
            }
            ManifoldGeometry::Klein(k) => TangentLog { vector: k.log(z, y), cut_locus: false },
            ManifoldGeometry::Flat { .. } => TangentLog {
                vector: y.iter().zip(z).map(|(&a, &b)| a - b).collect(),
                cut_locus: false,
            },
        }
    }

    /// Geodesic distance.
    ///
    /// On the Klein surface this is a graph-geodesic approximation (see
    /// [`KleinSurface::geodesic_distance`]); everywhere else it is exact and
    /// equals `|log(z, y)|`.
    pub fn dist(&self, z: &[T], y: &[T]) -> T {
        match self {
            ManifoldGeometry::Circle | ManifoldGeometry::Sphere2 => sphere_angle(z, y),
            ManifoldGeometry::So3 => {
                let c = dot(z, y);
                if c < T::zero() {
                    let neg: Vec<T> = y.iter().map(|&x| -x).collect();
                    sphere_angle(z, &neg)
                } else {
                    sphere_angle(z, y)
                }
            }
            ManifoldGeometry::Klein(k) => k.geodesic_distance(z, y),
            ManifoldGeometry::Flat { .. } => dist_euclid(z, y),
        }
    }

    /// Distances from a fixed source, amortising any per-source set-up.
    pub fn distance_field(&self, source: &[T]) -> DistanceField<'_, T> {
        match self {
            ManifoldGeometry::Klein(k) => DistanceField::Klein(k.distance_field(source)),
            _ => DistanceField::Closed { geometry: self, source: source.to_vec() },
        }
    }
}

/// Distances from one source point to many targets.
pub enum DistanceField<'a, T: Real> {
    Closed { geometry: &'a ManifoldGeometry<T>, source: Vec<T> },
    Klein(KleinDistanceField<'a, T>),
}

impl<T: Real> DistanceField<'_, T> {
    pub fn dist_to(&self, y: &[T]) -> T {
        match self {
            DistanceField::Closed { geometry, source } => geometry.dist(source, y),
            DistanceField::Klein(f) => f.dist_to(y),
        }
    }
}

fn lex_less<T: Real>(a: &[T], b: &[T]) -> bool {
    for (&x, &y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

pub(crate) fn normalize_or_pole<T: Real>(z: &[T]) -> Vec<T> {
    let n = norm(z);
    if n <= T::min_positive_value() {
        let mut e = vec![T::zero(); z.len()];
        e[0] = T::one();
        e
    } else {
        z.iter().map(|&x| x / n).collect()
    }
}

/// Flips the sign so that the first nonzero coordinate is positive.
pub fn canonicalize_quat<T: Real>(q: &[T]) -> Vec<T> {
    let first = q.iter().copied().find(|&x| x != T::zero()).unwrap_or(T::one());
    if first < T::zero() {
        q.iter().map(|&x| -x).collect()
    } else {
        q.to_vec()
    }
}

fn sphere_angle<T: Real>(z: &[T], y: &[T]) -> T {
    let c = dot(z, y);
    let w: Vec<T> = y.iter().zip(z).map(|(&a, &b)| a - c * b).collect();
    norm(&w).atan2(c)
}

fn sphere_exp<T: Real>(z: &[T], v: &[T]) -> Vec<T> {
    let t = norm(v);
    if t == T::zero() {
        return z.to_vec();
    }
    let (s, c) = t.sin_cos();
    let out: Vec<T> = z.iter().zip(v).map(|(&a, &b)| a * c + b * (s / t)).collect();
    normalize_or_pole(&out)
}

fn sphere_log<T: Real>(z: &[T], y: &[T]) -> TangentLog<T> {
    let c = dot(z, y);
    let w: Vec<T> = y.iter().zip(z).map(|(&a, &b)| a - c * b).collect();
    let s = norm(&w);
    if s <= T::tiny() && c < T::zero() {
        // Antipodal: the lexicographically smallest unit tangent minimises the
        // first coordinate it can, i.e. points along -e_i projected to T_z M.
        let n = z.len();
        for i in 0..n {
            let mut u: Vec<T> = z.iter().map(|&zk| zk * z[i]).collect();
            u[i] -= T::one();
            let un = norm(&u);
            if un > T::lit(1e-6) {
                let vector = u.iter().map(|&x| x / un * T::PI()).collect();
                return TangentLog { vector, cut_locus: true };
            }
        }
        unreachable!("a unit vector in R^N has a nonzero tangent projection of some -e_i");
    }
    if s == T::zero() {
        return TangentLog { vector: vec![T::zero(); z.len()], cut_locus: false };
    }
    let theta = s.atan2(c);
    TangentLog { vector: w.iter().map(|&x| x * (theta / s)).collect(), cut_locus: false }
}
