//! Seeded synthetic fixtures with known ground truth.

use std::f64::consts::{PI, TAU};

use mlift::geometry::{KleinSurface, ManifoldGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::io::Raster;

/// Clean and noisy samples, `pixels × N` each.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub clean: Vec<Vec<f64>>,
    pub noisy: Vec<Vec<f64>>,
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).unwrap().sample(rng)
    } else {
        0.0
    }
}

/// Wraps an angle to `[−π, π)`.
pub fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

/// Isotropic Gaussian in the tangent space at `z`, pushed back to the
/// manifold by the exponential map.
pub fn tangent_noise(geometry: &ManifoldGeometry<f64>, z: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..z.len()).map(|_| gauss(rng, sigma)).collect();
    match geometry {
        ManifoldGeometry::Circle | ManifoldGeometry::Sphere2 | ManifoldGeometry::So3 => {
            let c: f64 = raw.iter().zip(z).map(|(a, b)| a * b).sum();
            let t: Vec<f64> = raw.iter().zip(z).map(|(a, b)| a - c * b).collect();
            geometry.exp(z, &t)
        }
        // no closed-form exponential: perturb in R^N and reproject
        _ => geometry.project(&z.iter().zip(&raw).map(|(a, b)| a + b).collect::<Vec<_>>()),
    }
}

/// InSAR-like wrapped phase: concentric fringes plus a ramp and a step,
/// `rows × cols`, wrapped Gaussian noise. Phases in `[−π, π)`.
pub fn circle_noisy(rows: usize, cols: usize, sigma: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clean = Vec::with_capacity(rows * cols);
    let mut noisy = Vec::with_capacity(rows * cols);
    let scale = rows.max(cols) as f64;
    for i in 0..rows {
        for j in 0..cols {
            let (y, x) = (i as f64 / scale, j as f64 / scale);
            let r2 = (x - 0.45).powi(2) + (y - 0.55).powi(2);
            let step = if x + 0.5 * y > 0.9 { 1.5 } else { 0.0 };
            let phase = wrap(14.0 * r2 * TAU / 2.0 + 3.0 * x + step);
            clean.push(phase);
            noisy.push(wrap(phase + gauss(&mut rng, sigma)));
        }
    }
    (clean, noisy)
}

pub fn phase_to_circle(phases: &[f64]) -> Vec<Vec<f64>> {
    phases.iter().map(|a| vec![a.cos(), a.sin()]).collect()
}

/// A loop on S² winding twice around the z-axis while oscillating in
/// latitude.
pub fn sphere_curve(n: usize, sigma: f64, seed: u64) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = ManifoldGeometry::Sphere2;
    let clean: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let t = i as f64 / (n.max(2) - 1) as f64;
            let lat = 0.6 * (3.0 * TAU * t).sin();
            let lon = 2.0 * TAU * t;
            vec![lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
        })
        .collect();
    let noisy = clean.iter().map(|z| tangent_noise(&g, z, sigma, &mut rng)).collect();
    Pair { clean, noisy }
}

/// Piecewise smooth unit-normal field `rows × cols`: a tilted plane, a dome
/// and a ridge, with tangent Gaussian noise.
pub fn sphere_image(rows: usize, cols: usize, sigma: f64, seed: u64) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = ManifoldGeometry::Sphere2;
    let mut clean = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let (y, x) = (i as f64 / rows as f64, j as f64 / cols as f64);
            let grad = if (x - 0.6).powi(2) + (y - 0.4).powi(2) < 0.08 {
                (-2.5 * (x - 0.6), -2.5 * (y - 0.4))
            } else if x < 0.35 {
                (0.9, -0.4)
            } else {
                (-0.2, 0.7 * (TAU * x).cos())
            };
            let n = [-grad.0, -grad.1, 1.0];
            let r = (n[0] * n[0] + n[1] * n[1] + 1.0f64).sqrt();
            clean.push(n.iter().map(|c| c / r).collect::<Vec<_>>());
        }
    }
    let noisy = clean.iter().map(|z| tangent_noise(&g, z, sigma, &mut rng)).collect();
    Pair { clean, noisy }
}

/// 250 samples of a closed curve on the Klein surface, wrapping once around
/// both parameter directions.
pub fn klein_curve(n: usize, sigma: f64, seed: u64) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = KleinSurface::<f64>::new();
    let g = ManifoldGeometry::klein();
    let clean: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            k.point(TAU * t, 0.4 + 0.8 * (TAU * t).sin() + PI * t).to_vec()
        })
        .collect();
    let noisy = clean.iter().map(|z| tangent_noise(&g, z, sigma, &mut rng)).collect();
    Pair { clean, noisy }
}

pub const KLEIN_SAMPLES: usize = 250;

/// Smoothly varying rotations on a `size × size` grid (unit quaternions,
/// canonical sign) with tangent noise, and a mask marking the central
/// square as unknown.
pub fn so3_grid(size: usize, sigma: f64, seed: u64) -> (Pair, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = ManifoldGeometry::So3;
    let mut clean = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    let lo = size / 3;
    let hi = size - size / 3;
    for i in 0..size {
        for j in 0..size {
            let (u, v) = (i as f64 / size as f64, j as f64 / size as f64);
            let angle = 0.4 + 1.2 * u;
            let axis = [v.cos(), v.sin() * 0.5, 0.6];
            let an = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
            let (s, c) = (angle / 2.0).sin_cos();
            clean.push(g.project(&[c, s * axis[0] / an, s * axis[1] / an, s * axis[2] / an]));
            mask.push((lo..hi).contains(&i) && (lo..hi).contains(&j));
        }
    }
    let noisy = clean.iter().map(|z| g.project(&tangent_noise(&g, z, sigma, &mut rng))).collect();
    (Pair { clean, noisy }, mask)
}

/// Piecewise-constant signal in R² with Gaussian noise.
pub fn flat_rof(n: usize, sigma: f64, seed: u64) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = [[0.2, 0.8], [0.7, 0.3], [0.5, 0.5], [0.9, 0.9]];
    let clean: Vec<Vec<f64>> = (0..n).map(|i| levels[(4 * i / n.max(1)).min(3)].to_vec()).collect();
    let noisy = clean.iter().map(|z| z.iter().map(|&a| a + gauss(&mut rng, sigma)).collect()).collect();
    Pair { clean, noisy }
}

/// Uniform random points on the circle with random positive weights summing
/// to one.
pub fn circle_points(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    (angles, w)
}

pub fn to_raster(rows: usize, cols: usize, values: &[Vec<f64>]) -> Raster {
    let channels = values.first().map_or(1, Vec::len);
    let data = values.iter().flatten().map(|&x| x as f32).collect();
    Raster { width: cols, height: rows, channels, data }
}
