//! File formats: raw `f32` rasters with a text sidecar, delimited signal
//! files, PLY polylines, PGM hillshades and the diagnostics report.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use mlift::solver::Diagnostics;

use crate::error::CliError;

/// `rows × cols × channels` samples, row-major, channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, CliError> {
        if data.len() != width * height * channels {
            return Err(CliError::Parse(format!(
                "raster {width}x{height}x{channels} needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Raster { width, height, channels, data })
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }
}

/// Sidecar path of a raster payload: `foo.raw` → `foo.raw.hdr`.
pub fn header_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Reads a raster from its payload path; the header is the `.hdr` sidecar.
pub fn read_raster(path: &Path) -> Result<Raster, CliError> {
    let hdr = header_path(path);
    let text = fs::read_to_string(&hdr).map_err(|e| io_err(&hdr, e))?;
    let (mut width, mut height, mut channels) = (None, None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Parse(format!("{}: expected key=value, got {line:?}", hdr.display())))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || value.parse::<usize>().map_err(|_| CliError::Parse(format!("{key}: not a count: {value:?}")));
        match key {
            "width" => width = Some(num()?),
            "height" => height = Some(num()?),
            "channels" => channels = Some(num()?),
            "dtype" if value != "f32" => return Err(CliError::Parse(format!("unsupported dtype {value:?}"))),
            "order" if value != "row-major" => return Err(CliError::Parse(format!("unsupported order {value:?}"))),
            _ => {}
        }
    }
    let missing = |k: &str| CliError::Parse(format!("{}: missing {k}", hdr.display()));
    let (width, height, channels) =
        (width.ok_or_else(|| missing("width"))?, height.ok_or_else(|| missing("height"))?, channels.ok_or_else(|| missing("channels"))?);
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != width * height * channels * 4 {
        return Err(CliError::Parse(format!(
            "{}: payload has {} bytes, header implies {}",
            path.display(),
            bytes.len(),
            width * height * channels * 4
        )));
    }
    let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Raster::new(width, height, channels, data)
}

pub fn write_raster(path: &Path, r: &Raster) -> Result<(), CliError> {
    let header = format!("width={}\nheight={}\nchannels={}\ndtype=f32\norder=row-major\n", r.width, r.height, r.channels);
    let hdr = header_path(path);
    fs::write(&hdr, header).map_err(|e| io_err(&hdr, e))?;
    let bytes: Vec<u8> = r.data.iter().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Rows of a comma, semicolon, tab or space separated file. Blank lines and
/// `#` comments are skipped.
pub fn read_signal(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_signal(&text).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn parse_signal(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Parse(format!("line {}: not a row of finite numbers", n + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::Parse(format!("line {}: {} columns, expected {}", n + 1, row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Parse("no samples".into()));
    }
    Ok(rows)
}

/// Comma separated, shortest round-trip formatting.
pub fn format_signal(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_signal(path: &Path, rows: &[Vec<f64>]) -> Result<(), CliError> {
    fs::write(path, format_signal(rows)).map_err(|e| io_err(path, e))
}

/// ASCII PLY with the samples as vertices joined by consecutive edges.
/// Coordinates beyond the third are dropped; missing ones are zero.
pub fn write_polyline_ply(path: &Path, rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "ply\nformat ascii 1.0\nelement vertex {}", rows.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    let _ = writeln!(s, "element edge {}\nproperty int vertex1\nproperty int vertex2\nend_header", rows.len().saturating_sub(1));
    for r in rows {
        let c = |i: usize| r.get(i).copied().unwrap_or(0.0);
        let _ = writeln!(s, "{} {} {}", c(0), c(1), c(2));
    }
    for i in 1..rows.len() {
        let _ = writeln!(s, "{} {}", i - 1, i);
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

/// Lambertian shading `max(0, ⟨n, l⟩)` with `l = (1,1,1)/√3` of a 3-channel
/// normals raster, as binary PGM.
pub fn hillshade(normals: &Raster) -> Result<Vec<u8>, CliError> {
    if normals.channels != 3 {
        return Err(CliError::Shape(format!("hillshade needs 3 channels, got {}", normals.channels)));
    }
    let l = 1.0 / 3f32.sqrt();
    let mut out = format!("P5\n{} {}\n255\n", normals.width, normals.height).into_bytes();
    for i in 0..normals.num_pixels() {
        let n = normals.pixel(i);
        let shade = ((n[0] + n[1] + n[2]) * l).clamp(0.0, 1.0);
        out.push((shade * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn write_hillshade(path: &Path, normals: &Raster) -> Result<(), CliError> {
    fs::write(path, hillshade(normals)?).map_err(|e| io_err(path, e))
}

/// Diagnostics path next to an output: `out.csv` → `out.csv.diag.txt`.
pub fn diagnostics_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".diag.txt");
    PathBuf::from(s)
}

/// Plain `key: value` report followed by the gap trace.
pub fn write_diagnostics(path: &Path, d: &Diagnostics<f64>, extra: &[(&str, String)]) -> Result<(), CliError> {
    let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    let mut write = || -> io::Result<()> {
        writeln!(w, "iterations: {}", d.iterations)?;
        writeln!(w, "converged: {}", d.converged)?;
        writeln!(w, "final_relative_gap: {:e}", d.final_gap.relative)?;
        writeln!(w, "primal_energy: {}", d.final_gap.primal)?;
        writeln!(w, "dual_energy: {}", d.final_gap.dual)?;
        if let Some(n) = d.norm_estimate {
            writeln!(w, "operator_norm_estimate: {n}")?;
        }
        writeln!(w, "seconds: {:.3}", d.seconds)?;
        for (k, v) in extra {
            writeln!(w, "{k}: {v}")?;
        }
        writeln!(w, "# iteration primal dual relative_gap")?;
        for t in &d.trace {
            writeln!(w, "{} {} {} {:e}", t.iteration, t.primal, t.dual, t.relative_gap)?;
        }
        w.flush()
    };
    write().map_err(|e| io_err(path, e))
}

/// The `final_relative_gap` entry of a diagnostics file.
pub fn read_final_gap(path: &Path) -> Result<f64, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .find_map(|l| l.strip_prefix("final_relative_gap:"))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| CliError::Parse(format!("{}: no final_relative_gap", path.display())))
}
