//! Convex regularizers `η` acting on `s × d` gradient matrices, with their
//! conjugates and epigraph projections.

use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::proxkit::{
    project_ball_in_place, project_parabola_epi_in_place, project_truncated_parabola_epi_in_place, BallNorm,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    /// `λ‖ξ‖_F`.
    TvFrobenius,
    /// `λ · (sum of singular values)`.
    TvNuclear,
    /// `λ φ_α(‖ξ‖_F)`.
    Huber,
    /// `λ‖ξ‖²_F / 2`.
    Quadratic,
}

impl RegularizerKind {
    pub fn is_tv(self) -> bool {
        matches!(self, RegularizerKind::TvFrobenius | RegularizerKind::TvNuclear)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec<T> {
    pub kind: RegularizerKind,
    pub lambda: T,
    /// Huber only.
    pub alpha: T,
}

/// Huber function: `r²/(2α)` for `r ≤ α`, else `r − α/2`.
pub fn huber_phi<T: Real>(r: T, alpha: T) -> T {
    let r = r.abs();
    if r <= alpha {
        r * r / (alpha + alpha)
    } else {
        r - alpha / T::lit(2.0)
    }
}

fn frob<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

impl<T: Real> RegularizerSpec<T> {
    pub fn new(kind: RegularizerKind, lambda: T, alpha: T) -> Result<Self> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        if kind == RegularizerKind::Huber && (!(alpha > T::zero()) || !alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("huber alpha must be positive, got {alpha}")));
        }
        Ok(RegularizerSpec { kind, lambda, alpha })
    }

    pub fn tv(lambda: T) -> Self {
        RegularizerSpec { kind: RegularizerKind::TvFrobenius, lambda, alpha: T::zero() }
    }

    pub fn tv_nuclear(lambda: T) -> Self {
        RegularizerSpec { kind: RegularizerKind::TvNuclear, lambda, alpha: T::zero() }
    }

    pub fn huber(lambda: T, alpha: T) -> Self {
        RegularizerSpec { kind: RegularizerKind::Huber, lambda, alpha }
    }

    pub fn quadratic(lambda: T) -> Self {
        RegularizerSpec { kind: RegularizerKind::Quadratic, lambda, alpha: T::zero() }
    }

    /// `η(ξ)` for a row-major `rows × cols` matrix.
    pub fn value(&self, xi: &[T], rows: usize, cols: usize) -> T {
        let l = self.lambda;
        match self.kind {
            RegularizerKind::TvFrobenius => l * frob(xi),
            RegularizerKind::TvNuclear => l * singular_values(xi, rows, cols).into_iter().sum::<T>(),
            RegularizerKind::Huber => l * huber_phi(frob(xi), self.alpha),
            RegularizerKind::Quadratic => l * xi.iter().map(|&v| v * v).sum::<T>() / T::lit(2.0),
        }
    }

    /// `η*(ζ)`, possibly `+∞`. Domain membership allows a relative slack of a
    /// few ulps so that projected points count as feasible.
    pub fn conjugate(&self, zeta: &[T], rows: usize, cols: usize) -> T {
        let l = self.lambda * (T::one() + T::epsilon() * T::lit(64.0));
        let sq: T = zeta.iter().map(|&v| v * v).sum();
        match self.kind {
            RegularizerKind::TvFrobenius => {
                if sq.sqrt() <= l {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
            RegularizerKind::TvNuclear => {
                let smax = singular_values(zeta, rows, cols).into_iter().fold(T::zero(), T::max);
                if smax <= l {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
            RegularizerKind::Huber => {
                if sq.sqrt() <= l {
                    self.alpha * sq / (self.lambda + self.lambda)
                } else {
                    T::infinity()
                }
            }
            RegularizerKind::Quadratic => sq / (self.lambda + self.lambda),
        }
    }

    /// Perspective `m · η(ξ / m)` for `m ≥ 0`; at `m = 0` the recession
    /// function (`+∞` for the quadratic unless `ξ = 0`).
    pub fn perspective(&self, m: T, xi: &[T], rows: usize, cols: usize) -> T {
        match self.kind {
            RegularizerKind::TvFrobenius | RegularizerKind::TvNuclear => self.value(xi, rows, cols),
            RegularizerKind::Huber => {
                let r = frob(xi);
                if m <= T::zero() {
                    self.lambda * r
                } else {
                    self.lambda * m * huber_phi(r / m, self.alpha)
                }
            }
            RegularizerKind::Quadratic => {
                let sq: T = xi.iter().map(|&v| v * v).sum();
                if sq == T::zero() {
                    T::zero()
                } else if m <= T::zero() {
                    T::infinity()
                } else {
                    self.lambda * sq / (m + m)
                }
            }
        }
    }

    /// Largest `θ ∈ [0, 1]` such that `η*(θζ) < ∞` (1 when the conjugate has
    /// full domain).
    pub fn domain_scale(&self, zeta: &[T], rows: usize, cols: usize) -> T {
        let n = match self.kind {
            RegularizerKind::Quadratic => return T::one(),
            RegularizerKind::TvNuclear => singular_values(zeta, rows, cols).into_iter().fold(T::zero(), T::max),
            _ => frob(zeta),
        };
        if n <= self.lambda {
            T::one()
        } else {
            self.lambda / n
        }
    }

    /// Projection onto `{(ζ, a) : η*(ζ) ≤ a}`, in place; returns the new `a`.
    pub fn project_epi_conjugate_in_place(&self, zeta: &mut [T], rows: usize, cols: usize, a: T) -> T {
        let l = self.lambda;
        match self.kind {
            RegularizerKind::TvFrobenius => {
                project_ball_in_place(zeta, rows, cols, l, BallNorm::Frobenius);
                a.max(T::zero())
            }
            RegularizerKind::TvNuclear => {
                project_ball_in_place(zeta, rows, cols, l, BallNorm::Spectral);
                a.max(T::zero())
            }
            RegularizerKind::Quadratic => project_parabola_epi_in_place(zeta, a, T::one() / l),
            RegularizerKind::Huber => project_truncated_parabola_epi_in_place(zeta, a, self.alpha / l, l),
        }
    }

    pub fn project_epi_conjugate(&self, zeta: &[T], rows: usize, cols: usize, a: T) -> (Vec<T>, T) {
        let mut z = zeta.to_vec();
        let a = self.project_epi_conjugate_in_place(&mut z, rows, cols, a);
        (z, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        assert!((RegularizerSpec::quadratic(2.0f64).value(&[0.6, 0.8], 1, 2) - 1.0).abs() < 1e-15);
        let h = RegularizerSpec::huber(1.0f64, 1.0);
        assert!((h.value(&[0.5], 1, 1) - 0.125).abs() < 1e-15);
        assert!((h.value(&[2.0], 1, 1) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn conjugates() {
        assert_eq!(RegularizerSpec::tv(1.0).conjugate(&[0.9], 1, 1), 0.0);
        assert!(RegularizerSpec::tv(1.0f64).conjugate(&[1.1], 1, 1).is_infinite());
        assert!((RegularizerSpec::quadratic(2.0f64).conjugate(&[2.0], 1, 1) - 1.0).abs() < 1e-15);
        assert!((RegularizerSpec::huber(1.0f64, 0.1).conjugate(&[1.0], 1, 1) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn tv_epigraph_projection_is_separable() {
        let (z, a) = RegularizerSpec::tv(1.0).project_epi_conjugate(&[2.0, 0.0], 1, 2, -1.0);
        assert_eq!((z, a), (vec![1.0, 0.0], 0.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RegularizerSpec::new(RegularizerKind::Huber, 1.0, 0.0).is_err());
        assert!(RegularizerSpec::<f64>::new(RegularizerKind::Quadratic, -1.0, 0.0).is_err());
    }
}
