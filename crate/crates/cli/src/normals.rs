use crate::error::CliError;
use crate::io::Raster;

/// Unit surface normals `(−∂z/∂x, −∂z/∂y, 1)/‖·‖` of a single-channel
/// elevation raster; `x` runs along columns, `y` along rows, both with sample
/// spacing `spacing`. Central differences inside, one-sided at the border.
pub fn normals_from_elevation(elev: &Raster, spacing: f64) -> Result<Raster, CliError> {
    if elev.channels != 1 {
        return Err(CliError::Shape(format!("elevation needs 1 channel, got {}", elev.channels)));
    }
    if !(spacing > 0.0) {
        return Err(CliError::Usage("spacing must be positive".into()));
    }
    let (w, h) = (elev.width, elev.height);
    let z = |i: usize, j: usize| elev.data[i * w + j] as f64;
    let diff = |n: usize, k: usize, f: &dyn Fn(usize) -> f64| -> f64 {
        if n < 2 {
            0.0
        } else if k == 0 {
            (f(1) - f(0)) / spacing
        } else if k == n - 1 {
            (f(n - 1) - f(n - 2)) / spacing
        } else {
            (f(k + 1) - f(k - 1)) / (2.0 * spacing)
        }
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..h {
        for j in 0..w {
            let dx = diff(w, j, &|c| z(i, c));
            let dy = diff(h, i, &|r| z(r, j));
            let r = (dx * dx + dy * dy + 1.0).sqrt();
            data.extend([(-dx / r) as f32, (-dy / r) as f32, (1.0 / r) as f32]);
        }
    }
    Raster::new(w, h, 3, data)
}
