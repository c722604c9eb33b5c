use mlift::dataterm::{DataTermKind, DataTermSpec};
use mlift::fem::FrameKind;
use mlift::geometry::Triangulation;
use mlift::regularizer::RegularizerSpec;
use mlift::solver::{
    estimate_norm, solve, DataModel, Grid, LiftedProblem, Mode, Operator, Precond, Solver, SolverOptions,
};
use mlift::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v = random_vec(rng, n);
    let r = dot(&v, &v).sqrt();
    v.into_iter().map(|a| a / r).collect()
}

fn angle(a: f64) -> Vec<f64> {
    vec![a.cos(), a.sin()]
}

fn circle_problem(n: usize, labels: usize, reg: RegularizerSpec<f64>, mode: Mode, k: usize) -> LiftedProblem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let observed = (0..n).map(|i| angle(2.5 * i as f64 / n as f64 + rng.random_range(-0.4..0.4))).collect();
    let tri = Triangulation::build_circle(labels).unwrap();
    let spec = DataTermSpec::new(DataTermKind::QuadraticDistance { observed }, k, tri.geometry()).unwrap();
    LiftedProblem::build(mode, Grid::line(n).unwrap(), tri, FrameKind::Orthonormal, reg, &spec).unwrap()
}

fn sphere_problem(rows: usize, cols: usize, reg: RegularizerSpec<f64>, seed: u64) -> LiftedProblem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed = (0..rows * cols).map(|_| unit(&mut rng, 3)).collect();
    let tri = Triangulation::build_sphere2(0);
    let spec = DataTermSpec::new(DataTermKind::QuadraticDistance { observed }, 2, tri.geometry()).unwrap();
    LiftedProblem::sublabel(Grid::image(rows, cols).unwrap(), tri, FrameKind::Orthonormal, reg, &spec).unwrap()
}

fn plain(max_iter: usize) -> SolverOptions<f64> {
    SolverOptions { max_iter, ..Default::default() }
}

#[test]
fn constant_field_has_zero_gradient() {
    let g = Grid::image(3, 4).unwrap();
    let u = vec![2.5; 12 * 2];
    assert!(g.grad(&u, 2).iter().all(|&x| x == 0.0));
}

#[test]
fn forward_difference_with_neumann_boundary() {
    let g = Grid::line(2).unwrap();
    assert_eq!(g.grad(&[0.0, 1.0], 1), vec![1.0, 0.0]);
}

#[test]
fn grid_rejects_bad_shapes() {
    assert!(Grid::new(&[]).is_err());
    assert!(Grid::new(&[2, 0]).is_err());
    assert!(Grid::new(&[2, 2, 2]).is_err());
}

#[test]
fn grad_and_div_are_negative_adjoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for shape in [vec![9], vec![5, 7], vec![1, 6], vec![4, 1]] {
        let g = Grid::new(&shape).unwrap();
        let c = 3;
        let u = random_vec(&mut rng, g.num_pixels() * c);
        let p = random_vec(&mut rng, g.num_pixels() * c * g.dim());
        let lhs = dot(&g.grad(&u, c), &p);
        let rhs = -dot(&u, &g.div(&p, c));
        assert!((lhs - rhs).abs() < 1e-12, "{shape:?}: {lhs} vs {rhs}");
    }
}

fn check_adjoint(op: &Operator<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_vec(&mut rng, op.primal_len());
    let y = random_vec(&mut rng, op.dual_len());
    let mut kx = vec![0.0; op.dual_len()];
    let mut kty = vec![0.0; op.primal_len()];
    for abs in [false, true] {
        op.apply(&x, &mut kx, abs);
        op.apply_adjoint(&y, &mut kty, abs);
        let (a, b) = (dot(&kx, &y), dot(&x, &kty));
        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "abs={abs}: {a} vs {b}");
    }
}

#[test]
fn coupling_operator_is_adjoint_in_both_modes() {
    let grid = Grid::image(4, 3).unwrap();
    for tri in [
        Triangulation::<f64>::build_circle(7).unwrap(),
        Triangulation::build_sphere2(0),
        Triangulation::build_flat_box(&[0.0, 0.0], &[1.0, 2.0], &[3, 4]).unwrap(),
        Triangulation::build_so3(),
    ] {
        let frames = mlift::fem::frames(&tri, FrameKind::Orthonormal).unwrap();
        for sublabel in [true, false] {
            check_adjoint(&Operator::new(grid.clone(), &tri, &frames, sublabel), 5);
        }
    }
    let tri = Triangulation::<f64>::build_circle(5).unwrap();
    let frames = mlift::fem::frames(&tri, FrameKind::Orthonormal).unwrap();
    check_adjoint(&Operator::new(Grid::line(6).unwrap(), &tri, &frames, true), 6);
}

#[test]
fn abs_operator_bounds_the_plain_one() {
    let tri = Triangulation::<f64>::build_sphere2(0);
    let frames = mlift::fem::frames(&tri, FrameKind::Orthonormal).unwrap();
    let op = Operator::new(Grid::image(3, 3).unwrap(), &tri, &frames, true);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_vec(&mut rng, op.primal_len());
    let xa: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let mut kx = vec![0.0; op.dual_len()];
    let mut kax = vec![0.0; op.dual_len()];
    op.apply(&x, &mut kx, false);
    op.apply(&xa, &mut kax, true);
    for (a, b) in kx.iter().zip(&kax) {
        assert!(a.abs() <= b + 1e-12);
    }
}

#[test]
fn norm_estimate_is_stable_across_seeds() {
    let p = sphere_problem(4, 4, RegularizerSpec::tv(0.5), 1);
    let op = Solver::new(&p, &plain(1)).unwrap().operator().clone();
    let est: Vec<f64> = (0..6).map(|s| estimate_norm(&op, 50, s)).collect();
    let (lo, hi) = est.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo - 1.0 < 0.01, "{est:?}");
}

#[test]
fn norm_estimate_matches_operator_action() {
    // no unit vector may be stretched by more than the estimate (up to the
    // estimate's accuracy)
    let p = circle_problem(6, 6, RegularizerSpec::tv(0.5), Mode::Sublabel, 2);
    let solver = Solver::new(&p, &plain(1)).unwrap();
    let op = solver.operator();
    let est = solver.norm_estimate().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut kx = vec![0.0; op.dual_len()];
    for _ in 0..50 {
        let x = unit(&mut rng, op.primal_len());
        op.apply(&x, &mut kx, false);
        assert!(dot(&kx, &kx).sqrt() <= est * 1.01);
    }
}

#[test]
fn norm_estimate_matches_dense_oracle() {
    let tri = Triangulation::<f64>::build_circle(5).unwrap();
    let frames = mlift::fem::frames(&tri, FrameKind::Orthonormal).unwrap();
    let op = Operator::new(Grid::line(3).unwrap(), &tri, &frames, true);
    let (n, m) = (op.primal_len(), op.dual_len());
    // dense KᵀK column by column, then a long power iteration on it
    let mut k = vec![vec![0.0; n]; m];
    let (mut e, mut col) = (vec![0.0; n], vec![0.0; m]);
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        op.apply(&e, &mut col, false);
        for i in 0..m {
            k[i][j] = col[i];
        }
    }
    let ktk: Vec<Vec<f64>> =
        (0..n).map(|a| (0..n).map(|b| (0..m).map(|i| k[i][a] * k[i][b]).sum()).collect()).collect();
    let mut x = vec![1.0; n];
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let y: Vec<f64> = ktk.iter().map(|row| dot(row, &x)).collect();
        lambda = dot(&y, &y).sqrt();
        x = y.into_iter().map(|v| v / lambda).collect();
    }
    let est = estimate_norm(&op, 50, 4);
    assert!((est - lambda.sqrt()).abs() < 1e-9 * est, "{est} vs {}", lambda.sqrt());
}

#[test]
fn lellmann_mode_requires_tv() {
    let tri = Triangulation::<f64>::build_circle(8).unwrap();
    let spec =
        DataTermSpec::new(DataTermKind::QuadraticDistance { observed: vec![angle(0.1); 3] }, 1, tri.geometry()).unwrap();
    let grid = Grid::line(3).unwrap();
    for reg in [RegularizerSpec::huber(1.0, 0.1), RegularizerSpec::quadratic(1.0)] {
        let r = LiftedProblem::lellmann_tv(grid.clone(), tri.clone(), FrameKind::Orthonormal, reg, &spec);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
    assert!(LiftedProblem::lellmann_tv(grid, tri, FrameKind::Orthonormal, RegularizerSpec::tv(1.0), &spec).is_ok());
}

#[test]
fn pixel_count_mismatch_is_rejected() {
    let tri = Triangulation::<f64>::build_circle(8).unwrap();
    let spec =
        DataTermSpec::new(DataTermKind::QuadraticDistance { observed: vec![angle(0.1); 3] }, 1, tri.geometry()).unwrap();
    let r = LiftedProblem::sublabel(Grid::line(4).unwrap(), tri, FrameKind::Orthonormal, RegularizerSpec::tv(1.0), &spec);
    assert!(matches!(r, Err(Error::Shape(_))));
}

#[test]
fn iterates_stay_in_the_simplex() {
    let p = sphere_problem(3, 3, RegularizerSpec::huber(0.75, 0.1), 4);
    for precond in [Precond::Off, Precond::Diagonal] {
        let mut s = Solver::new(&p, &SolverOptions { precond, ..plain(1) }).unwrap();
        for _ in 0..200 {
            s.step().unwrap();
            for row in s.field().chunks(p.num_labels()) {
                assert!(row.iter().all(|&a| a >= -1e-9));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

fn assert_weak_duality(p: &LiftedProblem<f64>, seed: u64) {
    let mut s = Solver::new(p, &plain(1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..5 {
        let x: Vec<f64> = (0..s.primal().len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..s.dual().len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        s.set_primal(&x);
        s.set_dual(&y).unwrap();
        let g = s.certify();
        assert!(g.dual <= g.primal + 1e-8, "{g:?}");
        assert!(g.dual.is_finite());
    }
}

#[test]
fn weak_duality_at_random_feasible_states() {
    for (i, reg) in [
        RegularizerSpec::tv(0.7),
        RegularizerSpec::tv_nuclear(0.7),
        RegularizerSpec::huber(0.75, 0.1),
        RegularizerSpec::quadratic(0.5),
    ]
    .into_iter()
    .enumerate()
    {
        assert_weak_duality(&sphere_problem(3, 2, reg, i as u64), 10 + i as u64);
        assert_weak_duality(&circle_problem(5, 6, reg, Mode::Sublabel, 3), 20 + i as u64);
    }
    assert_weak_duality(&circle_problem(5, 6, RegularizerSpec::tv(0.4), Mode::LellmannTv, 1), 30);
}

#[test]
fn weak_duality_along_the_trace() {
    let p = sphere_problem(3, 3, RegularizerSpec::tv(0.4), 9);
    let sol = solve(&p, &SolverOptions { max_iter: 1000, check_every: 10, ..Default::default() }).unwrap();
    for t in &sol.diagnostics.trace {
        assert!(t.dual <= t.primal + 1e-8, "{t:?}");
    }
}

#[test]
fn logged_bounds_are_monotone() {
    let p = sphere_problem(3, 3, RegularizerSpec::tv(0.4), 9);
    let sol = solve(&p, &SolverOptions { max_iter: 1000, check_every: 10, ..Default::default() }).unwrap();
    for w in sol.diagnostics.trace.windows(2) {
        assert!(w[1].primal <= w[0].primal && w[1].dual >= w[0].dual, "{w:?}");
    }
    assert_eq!(sol.diagnostics.final_gap.primal, sol.diagnostics.trace.last().unwrap().primal);
}

/// Smallest hull value over all simplices; hull minima sit at hull vertices.
fn hull_minimum(p: &LiftedProblem<f64>, px: usize) -> f64 {
    let DataModel::Convexified(c) = &p.data else { unreachable!() };
    (0..c.num_simplices)
        .flat_map(|t| {
            let e = c.entry(px, t);
            (0..e.num_vertices()).map(move |j| e.vertex(j).1)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn single_pixel_reaches_the_hull_minimum() {
    let tri = Triangulation::<f64>::build_circle(9).unwrap();
    let spec = DataTermSpec::new(DataTermKind::QuadraticDistance { observed: vec![angle(1.234)] }, 3, tri.geometry())
        .unwrap();
    let p = LiftedProblem::sublabel(Grid::line(1).unwrap(), tri, FrameKind::Orthonormal, RegularizerSpec::tv(0.0), &spec)
        .unwrap();
    let target = hull_minimum(&p, 0);
    let sol = solve(&p, &SolverOptions { gap_tol: 1e-9, max_iter: 50_000, ..Default::default() }).unwrap();
    let g = sol.diagnostics.final_gap;
    assert!(sol.diagnostics.converged);
    assert!((g.primal - target).abs() < 1e-6, "{g:?} vs {target}");
    assert!((g.dual - target).abs() < 1e-6, "{g:?} vs {target}");
}

#[test]
fn single_pixel_flat_problem_converges_to_the_observation() {
    // the observation is a subgrid point, so the hull minimum is 0 there
    let tri = Triangulation::<f64>::build_flat_box(&[0.0, 0.0], &[1.0, 1.0], &[3, 3]).unwrap();
    let f = vec![0.25, 0.625];
    let spec =
        DataTermSpec::new(DataTermKind::QuadraticDistance { observed: vec![f.clone()] }, 4, tri.geometry()).unwrap();
    let p = LiftedProblem::sublabel(Grid::line(1).unwrap(), tri.clone(), FrameKind::Orthonormal, RegularizerSpec::tv(1.0), &spec)
        .unwrap();
    assert!(hull_minimum(&p, 0).abs() < 1e-14);
    let sol = solve(&p, &SolverOptions { gap_tol: 1e-10, max_iter: 50_000, ..Default::default() }).unwrap();
    let mean: Vec<f64> =
        (0..2).map(|c| (0..tri.num_vertices()).map(|k| sol.v[k] * tri.vertex(k)[c]).sum()).collect();
    assert!(sol.diagnostics.final_gap.primal.abs() < 1e-8);
    for c in 0..2 {
        assert!((mean[c] - f[c]).abs() < 1e-4, "{mean:?} vs {f:?}");
    }
}

#[test]
fn small_fixtures_certify_below_tolerance() {
    let cases = [
        (circle_problem(16, 8, RegularizerSpec::tv(0.3), Mode::Sublabel, 4), Precond::Off),
        (circle_problem(16, 8, RegularizerSpec::tv(0.3), Mode::LellmannTv, 1), Precond::Off),
        (circle_problem(16, 8, RegularizerSpec::huber(0.5, 0.1), Mode::Sublabel, 4), Precond::Diagonal),
        (sphere_problem(4, 4, RegularizerSpec::tv(0.4), 2), Precond::Diagonal),
    ];
    for (p, precond) in &cases {
        let sol = solve(p, &SolverOptions { precond: *precond, ..Default::default() }).unwrap();
        let d = &sol.diagnostics;
        assert!(d.converged, "{:?} {:?}", p.mode(), d.final_gap);
        assert!(d.final_gap.relative < 1e-5 && d.final_gap.relative >= -1e-9);
        assert_eq!(d.iterations % 50, 0);
    }
}

#[test]
fn iteration_cap_is_reported_not_raised() {
    let p = circle_problem(8, 8, RegularizerSpec::tv(0.3), Mode::Sublabel, 2);
    let sol = solve(&p, &SolverOptions { max_iter: 7, ..Default::default() }).unwrap();
    assert!(!sol.diagnostics.converged);
    assert_eq!(sol.diagnostics.iterations, 7);
    assert_eq!(sol.diagnostics.trace.len(), 1);
    assert_eq!(sol.v.len(), 8 * 8);
}

#[test]
fn strong_regularization_gives_a_constant_field() {
    let p = circle_problem(10, 8, RegularizerSpec::tv(50.0), Mode::Sublabel, 2);
    let sol = solve(&p, &SolverOptions { precond: Precond::Diagonal, ..Default::default() }).unwrap();
    let first = &sol.v[..8];
    for row in sol.v.chunks(8) {
        for (a, b) in row.iter().zip(first) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}

#[test]
fn single_precision_runs() {
    let tri = Triangulation::<f32>::build_circle(8).unwrap();
    let observed = (0..6).map(|i| vec![(0.3 * i as f32).cos(), (0.3 * i as f32).sin()]).collect();
    let spec = DataTermSpec::new(DataTermKind::QuadraticDistance { observed }, 2, tri.geometry()).unwrap();
    let p = LiftedProblem::sublabel(Grid::line(6).unwrap(), tri, FrameKind::Orthonormal, RegularizerSpec::tv(0.2f32), &spec)
        .unwrap();
    let sol = solve(&p, &SolverOptions { gap_tol: 1e-3, ..Default::default() }).unwrap();
    assert!(sol.diagnostics.converged, "{:?}", sol.diagnostics.final_gap);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_states_satisfy_weak_duality(seed in 0u64..1_000_000, lambda in 0.01f64..3.0, kind in 0usize..4) {
        let reg = match kind {
            0 => RegularizerSpec::tv(lambda),
            1 => RegularizerSpec::tv_nuclear(lambda),
            2 => RegularizerSpec::huber(lambda, 0.2),
            _ => RegularizerSpec::quadratic(lambda),
        };
        assert_weak_duality(&sphere_problem(2, 2, reg, seed), seed);
    }
}
