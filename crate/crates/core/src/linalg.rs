//! Small dense linear algebra on row-major slices.
//!
//! Everything here works on matrices of dimension at most a few hundred
//! (label counts) and usually at most four (simplex-local problems), so plain
//! Gaussian elimination and cyclic Jacobi are the right tools.

use crate::scalar::Real;

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
///
/// `a` is `n x n` row-major and is destroyed. Returns `None` if a pivot falls
/// below `tol` times the largest absolute entry.
pub fn solve_in_place<T: Real>(a: &mut [T], b: &mut [T], n: usize, tol: T) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if scale == T::zero() {
        return if n == 0 { Some(()) } else { None };
    }
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best <= tol * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] -= f * v;
            }
            let bc = b[col];
            b[row] -= f * bc;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    Some(())
}

/// Inverse of an `n x n` matrix by Gauss–Jordan elimination with partial
/// pivoting, or `None` when numerically singular.
pub fn invert<T: Real>(a: &[T], n: usize, tol: T) -> Option<Vec<T>> {
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if scale == T::zero() {
        return if n == 0 { Some(Vec::new()) } else { None };
    }
    let mut m = a.to_vec();
    let mut inv = vec![T::zero(); n * n];
    for i in 0..n {
        inv[i * n + i] = T::one();
    }
    for col in 0..n {
        let piv = (col..n).fold(col, |p, r| if m[r * n + col].abs() > m[p * n + col].abs() { r } else { p });
        if m[piv * n + col].abs() <= tol * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
        }
        let d = T::one() / m[col * n + col];
        for k in 0..n {
            m[col * n + k] *= d;
            inv[col * n + k] *= d;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col];
            if f == T::zero() {
                continue;
            }
            for k in 0..n {
                let (mv, iv) = (m[col * n + k], inv[col * n + k]);
                m[row * n + k] -= f * mv;
                inv[row * n + k] -= f * iv;
            }
        }
    }
    Some(inv)
}

/// Eigen-decomposition of a symmetric `n x n` matrix by cyclic Jacobi sweeps.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors stored as the
/// columns of a row-major `n x n` matrix.
pub fn symmetric_eigen<T: Real>(a: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    let mut m = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    for _sweep in 0..64 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let diag: T = (0..n).map(|i| m[i * n + i] * m[i * n + i]).sum();
        if off <= T::epsilon() * T::epsilon() * (diag + off) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), v)
}

/// Singular values of an `r x c` row-major matrix.
pub fn singular_values<T: Real>(a: &[T], r: usize, c: usize) -> Vec<T> {
    let gram = gram_small(a, r, c);
    let k = r.min(c);
    let (mut ev, _) = symmetric_eigen(&gram, k);
    ev.iter_mut().for_each(|x| *x = x.max(T::zero()).sqrt());
    ev
}

/// `A Aᵀ` if `r <= c`, else `Aᵀ A`.
fn gram_small<T: Real>(a: &[T], r: usize, c: usize) -> Vec<T> {
    if r <= c {
        let mut g = vec![T::zero(); r * r];
        for i in 0..r {
            for j in 0..r {
                g[i * r + j] = (0..c).map(|k| a[i * c + k] * a[j * c + k]).sum();
            }
        }
        g
    } else {
        let mut g = vec![T::zero(); c * c];
        for i in 0..c {
            for j in 0..c {
                g[i * c + j] = (0..r).map(|k| a[k * c + i] * a[k * c + j]).sum();
            }
        }
        g
    }
}

/// Orthonormalises the rows of `rows x cols` matrix `a` by modified
/// Gram–Schmidt. Returns `None` when the rows are (numerically) dependent.
pub fn orthonormal_rows<T: Real>(a: &[T], rows: usize, cols: usize, tol: T) -> Option<Vec<T>> {
    let mut q = a.to_vec();
    for i in 0..rows {
        let orig = (0..cols).map(|k| a[i * cols + k] * a[i * cols + k]).sum::<T>().sqrt();
        for j in 0..i {
            let d: T = (0..cols).map(|k| q[i * cols + k] * q[j * cols + k]).sum();
            for k in 0..cols {
                let qj = q[j * cols + k];
                q[i * cols + k] -= d * qj;
            }
        }
        let nrm = (0..cols).map(|k| q[i * cols + k] * q[i * cols + k]).sum::<T>().sqrt();
        if nrm <= tol * orig.max(T::min_positive_value()) || nrm == T::zero() {
            return None;
        }
        for k in 0..cols {
            q[i * cols + k] /= nrm;
        }
    }
    Some(q)
}

/// Symmetric positive (semi)definite solve via Cholesky with a diagonal
/// floor; used for Gram systems of active constraint normals.
pub fn cholesky_solve<T: Real>(a: &[T], b: &mut [T], n: usize) -> Option<()> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a: Vec<f64> = vec![2.0, 1.0, 1.0, 3.0];
        let mut b = vec![3.0, 5.0];
        solve_in_place(&mut a, &mut b, 2, 1e-14).unwrap();
        assert!((b[0] - 0.8).abs() < 1e-14 && (b[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_is_detected() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 1.0];
        assert!(solve_in_place(&mut a, &mut b, 2, 1e-12).is_none());
    }

    #[test]
    fn jacobi_reconstructs() {
        let a = vec![4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 1.0];
        let (ev, v) = symmetric_eigen(&a, 3);
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| v[i * 3 + k] * ev[k] * v[j * 3 + k]).sum();
                assert!((r - a[i * 3 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_values_of_diag() {
        let sv = singular_values::<f64>(&[2.0, 0.0, 0.0, -0.5], 2, 2);
        let mut sv = sv;
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((sv[0] - 0.5).abs() < 1e-14 && (sv[1] - 2.0).abs() < 1e-14);
    }
}
