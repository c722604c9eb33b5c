//! Argument parsing and the five commands.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlift::dataterm::{DataTermKind, DataTermSpec};
use mlift::fem::FrameKind;
use mlift::geometry::{ManifoldGeometry, Triangulation};
use mlift::regularizer::{RegularizerKind, RegularizerSpec};
use mlift::solver::{solve, Grid, LiftedProblem, Mode, Precond, Solution, SolverOptions};
use mlift::unlift::{gradient_descent_mean, lifted_mean_demo, mean_energy, unlift_field, DescentOptions, KarcherOptions};

use crate::error::{CliError, EXIT_NOT_CONVERGED};
use crate::io::{self, Raster};
use crate::normals::normals_from_elevation;
use crate::synth;

#[derive(Debug, Parser)]
#[command(name = "mlift", version, about = "Lifted convex relaxations for manifold-valued signals and images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise a signal (CSV) or raster with a quadratic-distance data term.
    Denoise(SolveArgs),
    /// Fill in the masked region of a signal or raster.
    Inpaint(SolveArgs),
    /// Weighted mean of points on the circle: lifting against gradient descent.
    Mean(MeanArgs),
    /// Write a synthetic fixture (clean and noisy).
    Synth(SynthArgs),
    /// Surface normals of an elevation raster.
    Normals(NormalsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Manifold {
    S1,
    S2,
    So3,
    Klein,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegArg {
    Tv,
    Tvnuc,
    Huber,
    Quad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sublabel,
    Lellmann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrameArg {
    Ortho,
    Logmap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecondArg {
    Off,
    Diag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SynthKind {
    CircleNoisy,
    SphereCurve,
    SphereImage,
    #[value(name = "klein_curve_250")]
    KleinCurve250,
    So3Grid,
    FlatRof,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub manifold: Manifold,
    /// Label count (s1), refinement level (s2), grid size n for n×n (klein),
    /// points per axis (flat). Ignored for so3.
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long, value_enum, default_value = "tv")]
    pub reg: RegArg,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 4)]
    pub subgrid: usize,
    #[arg(long, value_enum, default_value = "sublabel")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "ortho")]
    pub frame: FrameArg,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub gap_tol: f64,
    #[arg(long, value_enum, default_value = "off")]
    pub precond: PrecondArg,
    /// Seed of the start vector of the ‖K‖ estimate.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Signal (.csv/.txt) or raster payload (with a `.hdr` sidecar).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Mask in the input's format, nonzero = unknown (inpaint only).
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MeanArgs {
    /// Rows `angle,weight` or `x,y,weight`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Report path; diagnostics go next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub labels: usize,
    #[arg(long, default_value_t = 8)]
    pub subgrid: usize,
    /// Start angle of gradient descent.
    #[arg(long, default_value_t = PI)]
    pub start: f64,
    /// Also report the 10⁵-point grid minimizer.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 1e-9)]
    pub gap_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise level; defaults per kind.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Samples (curves) or side length (images); defaults per kind.
    #[arg(long)]
    pub size: Option<usize>,
    /// Output prefix: writes `<out>.clean.*`, `<out>.noisy.*` (and `<out>.mask.raw`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct NormalsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
    /// Optional PGM hillshade of the normals.
    #[arg(long)]
    pub hillshade: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_from<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Denoise(a) => cmd_solve(a, false),
        Command::Inpaint(a) => cmd_solve(a, true),
        Command::Mean(a) => cmd_mean(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Normals(a) => cmd_normals(a),
    }
}

/// Label mesh for a manifold flag; flat boxes span `bounds`.
pub fn build_mesh(m: Manifold, labels: Option<usize>, bounds: Option<(&[f64], &[f64])>) -> Result<Triangulation<f64>, CliError> {
    Ok(match m {
        Manifold::S1 => Triangulation::build_circle(labels.unwrap_or(16))?,
        Manifold::S2 => Triangulation::build_sphere2(labels.unwrap_or(0)),
        Manifold::So3 => Triangulation::build_so3(),
        Manifold::Klein => {
            let n = labels.unwrap_or(5);
            Triangulation::build_klein(n, n)?
        }
        Manifold::Flat => {
            let (lo, hi) = bounds.ok_or_else(|| CliError::Usage("flat labels need data bounds".into()))?;
            let n = labels.unwrap_or(5);
            // widen degenerate extents so the box is valid
            let hi: Vec<f64> = lo.iter().zip(hi).map(|(&l, &h)| if h > l { h } else { l + 1.0 }).collect();
            Triangulation::build_flat_box(lo, &hi, &vec![n; lo.len()])?
        }
    })
}

fn regularizer(m: &ModelArgs) -> Result<RegularizerSpec<f64>, CliError> {
    let kind = match m.reg {
        RegArg::Tv => RegularizerKind::TvFrobenius,
        RegArg::Tvnuc => RegularizerKind::TvNuclear,
        RegArg::Huber => RegularizerKind::Huber,
        RegArg::Quad => RegularizerKind::Quadratic,
    };
    Ok(RegularizerSpec::new(kind, m.lambda, m.alpha)?)
}

pub fn solver_options(m: &ModelArgs) -> SolverOptions<f64> {
    SolverOptions {
        max_iter: m.max_iter,
        gap_tol: m.gap_tol,
        precond: match m.precond {
            PrecondArg::Off => Precond::Off,
            PrecondArg::Diag => Precond::Diagonal,
        },
        seed: m.seed,
        ..Default::default()
    }
}

/// Samples loaded from a signal or raster, before embedding.
#[derive(Debug, Clone)]
enum Input {
    Signal(Vec<Vec<f64>>),
    Raster(Raster),
}

impl Input {
    fn read(path: &Path) -> Result<Self, CliError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        if ext == "csv" || ext == "txt" {
            Ok(Input::Signal(io::read_signal(path)?))
        } else {
            Ok(Input::Raster(io::read_raster(path)?))
        }
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        match self {
            Input::Signal(r) => r.clone(),
            Input::Raster(r) => r.data.chunks(r.channels).map(|c| c.iter().map(|&x| x as f64).collect()).collect(),
        }
    }

    fn grid(&self) -> Result<Grid, CliError> {
        Ok(match self {
            Input::Signal(r) => Grid::line(r.len())?,
            Input::Raster(r) if r.height == 1 => Grid::line(r.width)?,
            Input::Raster(r) => Grid::image(r.height, r.width)?,
        })
    }

    fn num_pixels(&self) -> usize {
        match self {
            Input::Signal(r) => r.len(),
            Input::Raster(r) => r.num_pixels(),
        }
    }
}

/// Whether samples are phases (one column on S¹).
fn is_phase(m: Manifold, columns: usize) -> bool {
    m == Manifold::S1 && columns == 1
}

/// Embeds rows into `R^N` and snaps them onto the manifold. Rows flagged in
/// `skip` (unknown inpainting pixels) are replaced by `fallback`.
pub fn embed(
    geometry: &ManifoldGeometry<f64>,
    manifold: Manifold,
    rows: &[Vec<f64>],
    skip: Option<&[bool]>,
    fallback: &[f64],
) -> Result<Vec<Vec<f64>>, CliError> {
    let n = geometry.embed_dim();
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if skip.is_some_and(|s| s[i]) {
                return Ok(fallback.to_vec());
            }
            let z = if is_phase(manifold, r.len()) { vec![r[0].cos(), r[0].sin()] } else { r.clone() };
            if z.len() != n {
                return Err(CliError::Shape(format!("sample {i} has {} values, the manifold needs {n}", r.len())));
            }
            let off = geometry.off_manifold_distance(&z);
            if !(off <= 1e-3) {
                return Err(CliError::Parse(format!("sample {i} is {off:.3e} away from the manifold (tolerance 1e-3)")));
            }
            Ok(geometry.project(&z))
        })
        .collect()
}

fn read_mask(path: &Path, pixels: usize) -> Result<Vec<bool>, CliError> {
    let rows = Input::read(path)?.rows();
    if rows.len() != pixels || rows.iter().any(|r| r.len() != 1) {
        return Err(CliError::Shape(format!("mask has {} single-value entries, input has {pixels} pixels", rows.len())));
    }
    Ok(rows.iter().map(|r| r[0] != 0.0).collect())
}

fn bounds(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.first().map_or(0, Vec::len);
    let lo = (0..n).map(|c| rows.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min)).collect();
    let hi = (0..n).map(|c| rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max)).collect();
    (lo, hi)
}

/// Result of [`solve_rows`].
pub struct Denoised {
    pub points: Vec<Vec<f64>>,
    pub solution: Solution<f64>,
    pub flagged: usize,
    pub mesh: Triangulation<f64>,
}

/// Builds, solves and un-lifts the problem for already embedded samples.
pub fn solve_rows(
    m: &ModelArgs,
    grid: Grid,
    observed: Vec<Vec<f64>>,
    mask: Option<Vec<bool>>,
    mesh: Triangulation<f64>,
) -> Result<Denoised, CliError> {
    let kind = match mask {
        Some(mask) => DataTermKind::InpaintingIndicator { observed, mask },
        None => DataTermKind::QuadraticDistance { observed },
    };
    let spec = DataTermSpec::new(kind, m.subgrid, mesh.geometry())?;
    let mode = match m.mode {
        ModeArg::Sublabel => Mode::Sublabel,
        ModeArg::Lellmann => Mode::LellmannTv,
    };
    let frame = match m.frame {
        FrameArg::Ortho => FrameKind::Orthonormal,
        FrameArg::Logmap => FrameKind::LogMap,
    };
    let problem = LiftedProblem::build(mode, grid, mesh, frame, regularizer(m)?, &spec)?;
    let solution = solve(&problem, &solver_options(m))?;
    let means = unlift_field(&solution.v, &problem.tri, &KarcherOptions::default())?;
    let flagged = means.iter().filter(|r| r.flagged()).count();
    let points = means.into_iter().map(|r| r.point).collect();
    Ok(Denoised { points, solution, flagged, mesh: problem.tri })
}

fn cmd_solve(a: &SolveArgs, inpaint: bool) -> Result<i32, CliError> {
    let m = &a.model;
    if inpaint != a.mask.is_some() {
        return Err(CliError::Usage(if inpaint { "inpaint needs --mask" } else { "--mask is only valid for inpaint" }.into()));
    }
    let input = Input::read(&a.input)?;
    let rows = input.rows();
    let columns = rows[0].len();
    let mask = a.mask.as_deref().map(|p| read_mask(p, input.num_pixels())).transpose()?;
    let (lo, hi) = bounds(&rows);
    let mesh = build_mesh(m.manifold, m.labels, Some((&lo, &hi)))?;
    let fallback = mesh.vertex(0).to_vec();
    let observed = embed(mesh.geometry(), m.manifold, &rows, mask.as_deref(), &fallback)?;

    let res = solve_rows(m, input.grid()?, observed, mask, mesh)?;
    let out_rows: Vec<Vec<f64>> = if is_phase(m.manifold, columns) {
        res.points.iter().map(|z| vec![z[1].atan2(z[0])]).collect()
    } else {
        res.points.clone()
    };
    match &input {
        Input::Signal(_) => {
            io::write_signal(&a.out, &out_rows)?;
            io::write_polyline_ply(&with_suffix(&a.out, ".ply"), &res.points)?;
            let mesh_path = with_suffix(&a.out, ".mesh.ply");
            let f = fs::File::create(&mesh_path).map_err(|e| CliError::Io(format!("{}: {e}", mesh_path.display())))?;
            res.mesh.write_ply(std::io::BufWriter::new(f)).map_err(|e| CliError::Io(e.to_string()))?;
        }
        Input::Raster(r) => {
            let data = out_rows.iter().flatten().map(|&x| x as f32).collect();
            io::write_raster(&a.out, &Raster::new(r.width, r.height, out_rows[0].len(), data)?)?;
        }
    }
    let d = &res.solution.diagnostics;
    let extra = [
        ("command", if inpaint { "inpaint" } else { "denoise" }.to_string()),
        ("labels", res.mesh.num_vertices().to_string()),
        ("seed", m.seed.to_string()),
        ("flagged_pixels", res.flagged.to_string()),
    ];
    io::write_diagnostics(&io::diagnostics_path(&a.out), d, &extra)?;
    println!(
        "{} iterations, relative gap {:.3e}{}",
        d.iterations,
        d.final_gap.relative,
        if d.converged { "" } else { " (not converged)" }
    );
    Ok(if d.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Minimizer of `Σ λ d(θ, θᵢ)²` over `n` equispaced angles.
pub fn grid_oracle(angles: &[f64], weights: &[f64], n: usize) -> (f64, f64) {
    (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            (t, angles.iter().zip(weights).map(|(&a, &w)| w * circ_dist(t, a).powi(2)).sum::<f64>())
        })
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

fn cmd_mean(a: &MeanArgs) -> Result<i32, CliError> {
    let rows = io::read_signal(&a.input)?;
    let (angles, weights): (Vec<f64>, Vec<f64>) = match rows[0].len() {
        2 => rows.iter().map(|r| (r[0], r[1])).unzip(),
        3 => rows.iter().map(|r| (r[1].atan2(r[0]), r[2])).unzip(),
        n => return Err(CliError::Shape(format!("mean input needs 2 or 3 columns, got {n}"))),
    };
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || !(total > 0.0) {
        return Err(CliError::Usage("weights must be nonnegative with a positive sum".into()));
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let points: Vec<Vec<f64>> = angles.iter().map(|a| vec![a.cos(), a.sin()]).collect();
    let options = SolverOptions { gap_tol: a.gap_tol, max_iter: a.max_iter, ..Default::default() };
    let lifted = lifted_mean_demo(&points, &weights, a.labels, a.subgrid, &options)?;
    let g = ManifoldGeometry::Circle;
    let gd = gradient_descent_mean(&g, &points, &weights, &[a.start.cos(), a.start.sin()], &DescentOptions::default())?;
    let gd_energy = mean_energy(&g, &points, &weights, &gd.point);
    let angle = |z: &[f64]| z[1].atan2(z[0]);

    let mut report = format!(
        "lifted_angle: {}\nlifted_energy: {}\ndescent_angle: {}\ndescent_energy: {}\ndescent_iterations: {}\n",
        angle(&lifted.point),
        lifted.energy,
        angle(&gd.point),
        gd_energy,
        gd.iterations
    );
    if a.oracle {
        let (t, e) = grid_oracle(&angles, &weights, 100_000);
        report.push_str(&format!("oracle_angle: {}\noracle_energy: {e}\n", wrap_angle(t)));
    }
    print!("{report}");
    let out = a.out.clone().unwrap_or_else(|| with_suffix(&a.input, ".mean.txt"));
    fs::write(&out, &report).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let d = &lifted.solver;
    io::write_diagnostics(&io::diagnostics_path(&out), d, &[("command", "mean".into())])?;
    Ok(if d.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn wrap_angle(t: f64) -> f64 {
    synth::wrap(t)
}

fn cmd_synth(a: &SynthArgs) -> Result<i32, CliError> {
    let signal = |p: synth::Pair| -> Result<(), CliError> {
        io::write_signal(&with_suffix(&a.out, ".clean.csv"), &p.clean)?;
        io::write_signal(&with_suffix(&a.out, ".noisy.csv"), &p.noisy)
    };
    let raster = |rows: usize, cols: usize, p: synth::Pair| -> Result<(), CliError> {
        io::write_raster(&with_suffix(&a.out, ".clean.raw"), &synth::to_raster(rows, cols, &p.clean))?;
        io::write_raster(&with_suffix(&a.out, ".noisy.raw"), &synth::to_raster(rows, cols, &p.noisy))
    };
    match a.kind {
        SynthKind::CircleNoisy => {
            let n = a.size.unwrap_or(64);
            let (clean, noisy) = synth::circle_noisy(n, n, a.sigma.unwrap_or(0.6), a.seed);
            let wrap1 = |v: Vec<f64>| v.into_iter().map(|x| vec![x]).collect();
            raster(n, n, synth::Pair { clean: wrap1(clean), noisy: wrap1(noisy) })?;
        }
        SynthKind::SphereCurve => signal(synth::sphere_curve(a.size.unwrap_or(100), a.sigma.unwrap_or(0.3), a.seed))?,
        SynthKind::SphereImage => {
            let n = a.size.unwrap_or(32);
            raster(n, n, synth::sphere_image(n, n, a.sigma.unwrap_or(0.3), a.seed))?;
        }
        SynthKind::KleinCurve250 => {
            signal(synth::klein_curve(a.size.unwrap_or(synth::KLEIN_SAMPLES), a.sigma.unwrap_or(0.1), a.seed))?
        }
        SynthKind::So3Grid => {
            let n = a.size.unwrap_or(8);
            let (p, mask) = synth::so3_grid(n, a.sigma.unwrap_or(0.2), a.seed);
            raster(n, n, p)?;
            let m: Vec<Vec<f64>> = mask.iter().map(|&b| vec![if b { 1.0 } else { 0.0 }]).collect();
            io::write_raster(&with_suffix(&a.out, ".mask.raw"), &synth::to_raster(n, n, &m))?;
        }
        SynthKind::FlatRof => signal(synth::flat_rof(a.size.unwrap_or(64), a.sigma.unwrap_or(0.1), a.seed))?,
    }
    println!("seed {}", a.seed);
    Ok(0)
}

fn cmd_normals(a: &NormalsArgs) -> Result<i32, CliError> {
    let elev = io::read_raster(&a.input)?;
    let n = normals_from_elevation(&elev, a.spacing)?;
    io::write_raster(&a.out, &n)?;
    if let Some(h) = &a.hillshade {
        io::write_hillshade(h, &n)?;
    }
    Ok(0)
}
