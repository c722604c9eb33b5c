//! Forward differences on a rectangular pixel grid with Neumann boundaries.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major pixel grid of dimension 1 or 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    shape: Vec<usize>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(shape: &[usize]) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 || shape.contains(&0) {
            return Err(Error::Shape(format!("grid must be 1-D or 2-D with nonzero extents, got {shape:?}")));
        }
        let mut strides = vec![1; shape.len()];
        for i in (0..shape.len() - 1).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        Ok(Grid { shape: shape.to_vec(), strides })
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(&[n])
    }

    /// `rows × cols` image.
    pub fn image(rows: usize, cols: usize) -> Result<Self> {
        Self::new(&[rows, cols])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Domain dimension `d`.
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn num_pixels(&self) -> usize {
        self.shape.iter().product()
    }

    /// Index of the forward neighbour along `axis`, if inside the grid.
    #[inline]
    pub fn forward(&self, x: usize, axis: usize) -> Option<usize> {
        let coord = (x / self.strides[axis]) % self.shape[axis];
        (coord + 1 < self.shape[axis]).then(|| x + self.strides[axis])
    }

    /// Index of the backward neighbour along `axis`, if inside the grid.
    #[inline]
    pub fn backward(&self, x: usize, axis: usize) -> Option<usize> {
        let coord = (x / self.strides[axis]) % self.shape[axis];
        (coord > 0).then(|| x - self.strides[axis])
    }

    /// Forward differences of a `pixels × channels` field; the result is
    /// `pixels × channels × d` and vanishes across the last index of each axis.
    pub fn grad<T: Real>(&self, u: &[T], channels: usize) -> Vec<T> {
        let d = self.dim();
        let mut out = vec![T::zero(); u.len() * d];
        for x in 0..self.num_pixels() {
            for axis in 0..d {
                if let Some(y) = self.forward(x, axis) {
                    for c in 0..channels {
                        out[(x * channels + c) * d + axis] = u[y * channels + c] - u[x * channels + c];
                    }
                }
            }
        }
        out
    }

    /// Negative adjoint of [`Grid::grad`].
    pub fn div<T: Real>(&self, p: &[T], channels: usize) -> Vec<T> {
        let d = self.dim();
        let mut out = vec![T::zero(); self.num_pixels() * channels];
        for x in 0..self.num_pixels() {
            for axis in 0..d {
                let fwd = self.forward(x, axis).is_some();
                let back = self.backward(x, axis);
                for c in 0..channels {
                    let mut v = T::zero();
                    if fwd {
                        v += p[(x * channels + c) * d + axis];
                    }
                    if let Some(y) = back {
                        v -= p[(y * channels + c) * d + axis];
                    }
                    out[x * channels + c] += v;
                }
            }
        }
        out
    }
}
