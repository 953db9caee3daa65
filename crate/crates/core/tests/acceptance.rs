//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! failure status if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use co2seq::crvpinn::{
    five_point_solve, grad_loss, loss, residual, Activation, CollocationGrid, GramOperator, Mlp, PinnModel, PinnProblem,
};
use co2seq::driver::{
    compare_pressures, load_quadrature, run_direct, run_hybrid, ErrorReport, HybridPressure, Preset, SimConfig,
    TimingPhase, Trajectory,
};
use co2seq::io::{read_timings, FieldKind};
use co2seq::pressure_direct::{
    assemble_elliptic, assemble_pressure_system, solve_pressure_direct, EllipticCoefficients,
};
use co2seq::projection::{project_l2, solve_kronecker, TensorSplineField};
use co2seq::spline::{banded_solve, mass_matrix_1d, BandedMatrix, QuadratureRule, SplineSpace1D};
use common::*;
use ndarray::Array2;
use rand::Rng;

const PROJECTION_TOL: f64 = 1e-9;
const PROJECTION_SECONDS: f64 = 1.0;
const KRONECKER_TOL: f64 = 1e-10;
const BANDED_TOL: f64 = 1e-10;
const BANDED_SYSTEMS: usize = 100;
const CONVERGENCE_RATIO: f64 = 3.5;
const CONVERGENCE_SECONDS: f64 = 30.0;
const LOSS_TOL: f64 = 1e-10;
const LOSS_SECONDS: f64 = 5.0;
const GRADIENT_STEP: f64 = 1e-5;
const GRADIENT_TOL: f64 = 1e-4;
const GRADIENT_SECONDS: f64 = 10.0;
const RESIDUAL_TOL: f64 = 1e-10;
const RESIDUAL_LOSS_TOL: f64 = 1e-18;
const PINN_N: usize = 64;
const PINN_MESH: usize = 64;
const PINN_EPOCHS: usize = 5000;
const PINN_LEARNING_RATE: f64 = 1e-3;
const PINN_SECONDS: f64 = 600.0;
const SAMPLE_RESOLUTION: usize = 101;
const UNIFORM_FRACTION_UNDER_5: f64 = 0.90;
const LAYERED_MAX: f64 = 0.25;
const LAYERED_FRACTION_UNDER_20: f64 = 0.85;
const MASS_STEPS: usize = 50;
const MASS_TOL: f64 = 0.02;
const MASS_SECONDS: f64 = 120.0;
const TIMING_RATIO: f64 = 1.5;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn projection_exactness() -> Outcome {
    let start = Instant::now();
    let space = SplineSpace1D::new(4, 2).unwrap();
    let p = project_l2(|x, y| x * x + y * y, &space, &space, &QuadratureRule::for_degree(2)).unwrap();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (x, y) = (r.gen_range(0.0..=1.0), r.gen_range(0.0..=1.0));
        worst = worst.max((p.eval(x, y).unwrap().0 - (x * x + y * y)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= PROJECTION_TOL && secs < PROJECTION_SECONDS,
        format!("max error {worst:.2e} (tol {PROJECTION_TOL:e}), {secs:.3} s (limit {PROJECTION_SECONDS} s)"),
    )
}

fn kronecker_oracle() -> Outcome {
    let quad = QuadratureRule::gauss_legendre(6);
    let mut r = rng(2);
    let spaces: Vec<SplineSpace1D> = (1..=5)
        .flat_map(|p| (1..=5).map(move |e| (e, p)))
        .filter(|(e, p)| e + p <= 6)
        .map(|(e, p)| SplineSpace1D::new(e, p).unwrap())
        .collect();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for sx in &spaces {
        for sy in &spaces {
            let mx = mass_matrix_1d(sx, &quad).unwrap();
            let my = mass_matrix_1d(sy, &quad).unwrap();
            let load = Array2::from_shape_fn((sx.n_basis(), sy.n_basis()), |_| r.gen_range(-1.0..1.0));
            let got: Vec<f64> = solve_kronecker(&mx, &my, &load).unwrap().iter().copied().collect();
            let flat: Vec<f64> = load.iter().copied().collect();
            let oracle = dense_solve(&kron(&mx.to_dense(), &my.to_dense()), &flat);
            worst = worst.max(max_abs_diff(&got, &oracle) / max_abs(&oracle).max(1.0));
            cases += 1;
        }
    }
    check(
        worst <= KRONECKER_TOL,
        format!("{cases} space pairs, max relative difference {worst:.2e} (tol {KRONECKER_TOL:e})"),
    )
}

fn banded_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..BANDED_SYSTEMS {
        let n = r.gen_range(1..=16);
        let bw = r.gen_range(0..=3);
        let a = random_spd_banded(&mut r, n, bw);
        let b = uniform_vec(&mut r, n, -1.0, 1.0);
        let mut m = BandedMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..n.min(i + bw + 1) {
                m.set(i, j, a[i][j]);
            }
        }
        let x = banded_solve(&m, &b).unwrap();
        worst = worst.max(max_abs_diff(&x, &dense_solve(&a, &b)));
    }
    check(
        worst <= BANDED_TOL,
        format!("{BANDED_SYSTEMS} systems, max difference {worst:.2e} (tol {BANDED_TOL:e})"),
    )
}

fn sine_error(elements: usize) -> f64 {
    let space = SplineSpace1D::new(elements, 2).unwrap();
    let sys = assemble_elliptic(&space, &space, &QuadratureRule::gauss_legendre(5), true, |p, _| {
        EllipticCoefficients {
            alpha_x: 1.0,
            alpha_y: 1.0,
            source: 2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin(),
            flux: [0.0, 0.0],
        }
    });
    let p = solve_pressure_direct(&sys).unwrap();
    midpoint_integral(256, |x, y| {
        (p.eval(x, y).unwrap().0 - (PI * x).sin() * (PI * y).sin()).powi(2)
    })
    .sqrt()
}

fn pressure_convergence() -> Outcome {
    let start = Instant::now();
    let (e16, e32) = (sine_error(16), sine_error(32));
    let ratio = e16 / e32;
    let secs = start.elapsed().as_secs_f64();
    check(
        ratio >= CONVERGENCE_RATIO && secs < CONVERGENCE_SECONDS,
        format!(
            "L2 errors {e16:.3e} -> {e32:.3e}, ratio {ratio:.2} (min {CONVERGENCE_RATIO}), {secs:.2} s (limit {CONVERGENCE_SECONDS} s)"
        ),
    )
}

fn robust_loss_oracle() -> Outcome {
    let start = Instant::now();
    let n = 8;
    let gram = GramOperator::new(CollocationGrid::new(n).unwrap()).unwrap();
    let m = n - 1;
    let inv_h2 = (n * n) as f64;
    let mut dense = vec![vec![0.0; m * m]; m * m];
    let mut entries_exact = true;
    for i in 0..m {
        for j in 0..m {
            let r = i * m + j;
            dense[r][r] = 4.0 * inv_h2;
            for (di, dj) in [(1usize, 0usize), (0, 1)] {
                if i + di < m && j + dj < m {
                    let c = (i + di) * m + j + dj;
                    dense[r][c] = -inv_h2;
                    dense[c][r] = -inv_h2;
                }
            }
        }
    }
    for (r, row) in dense.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            entries_exact &= gram.entry(r, c) == v;
        }
    }
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let res = Array2::from_shape_fn((m, m), |_| r.gen_range(-1.0..1.0));
        let flat: Vec<f64> = res.iter().copied().collect();
        let oracle: f64 = flat.iter().zip(dense_solve(&dense, &flat)).map(|(a, b)| a * b).sum();
        worst = worst.max((gram.loss(&res).unwrap() - oracle).abs() / oracle);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        entries_exact && worst <= LOSS_TOL && secs < LOSS_SECONDS,
        format!(
            "Gram entries exact: {entries_exact}, max relative loss difference {worst:.2e} (tol {LOSS_TOL:e}), {secs:.3} s (limit {LOSS_SECONDS} s)"
        ),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let grid = CollocationGrid::new(8).unwrap();
    let mut r = rng(6);
    let alpha = Array2::from_shape_fn((grid.side(), grid.side()), |_| r.gen_range(0.5..1.5));
    let problem = PinnProblem::new(&grid, alpha, grid.from_fn(|x, y| 1.0 + x - y)).unwrap();
    let gram = GramOperator::new(grid).unwrap();
    let model = PinnModel::new(Mlp::new(&[2, 8, 1], Activation::Tanh, 6).unwrap());
    let (_, grad) = grad_loss(&model, &problem, &gram).unwrap();
    let mut worst = 0.0f64;
    for (k, g) in grad.iter().enumerate() {
        let shifted = |d: f64| {
            let mut m = model.clone();
            *m.mlp.params.iter_mut().nth(k).unwrap() += d;
            loss(&m, &problem, &gram).unwrap()
        };
        let fd = (shifted(GRADIENT_STEP) - shifted(-GRADIENT_STEP)) / (2.0 * GRADIENT_STEP);
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-8));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= GRADIENT_TOL && secs < GRADIENT_SECONDS,
        format!(
            "{} parameters, max relative difference {worst:.2e} (tol {GRADIENT_TOL:e}), {secs:.3} s (limit {GRADIENT_SECONDS} s)",
            model.mlp.params.len()
        ),
    )
}

fn residual_at_solution() -> Outcome {
    let mut r = rng(7);
    let (mut max_res, mut max_loss) = (0.0f64, 0.0f64);
    for n in [4, 8, 16, 32] {
        let grid = CollocationGrid::new(n).unwrap();
        let alpha = Array2::from_shape_fn((grid.side(), grid.side()), |_| r.gen_range(0.2..5.0));
        let f = Array2::from_shape_fn((grid.side(), grid.side()), |_| r.gen_range(-1.0..1.0));
        let u = five_point_solve(&alpha, &f, &grid).unwrap();
        let res = residual(&u, &alpha, &f, grid.h()).unwrap();
        max_res = max_res.max(res.iter().fold(0.0, |m, v| m.max(v.abs())));
        max_loss = max_loss.max(GramOperator::new(grid).unwrap().loss(&res).unwrap());
    }
    check(
        max_res <= RESIDUAL_TOL && max_loss <= RESIDUAL_LOSS_TOL,
        format!(
            "N up to 32: max|RES| {max_res:.2e} (tol {RESIDUAL_TOL:e}), loss {max_loss:.2e} (tol {RESIDUAL_LOSS_TOL:e})"
        ),
    )
}

/// Trains on the initial state and compares against the Galerkin solve.
fn pinn_vs_direct(preset: Preset) -> (ErrorReport, f64, f64, f64) {
    let mut c = SimConfig::for_preset(preset);
    c.collocation_n = PINN_N;
    c.mesh_elements = PINN_MESH;
    c.learning_rate = PINN_LEARNING_RATE;
    let reservoir = c.build_reservoir().unwrap();
    let space = SplineSpace1D::new(c.mesh_elements, c.degree).unwrap();
    let start = Instant::now();
    let mut pinn = HybridPressure::new(&c, &reservoir, &space, None).unwrap();
    let s0 = TensorSplineField::zeros(space.clone(), space.clone());
    let problem = pinn.problem(&s0, &reservoir, c.tau).unwrap();
    let history = pinn.train(&problem, PINN_EPOCHS).unwrap();
    let p_pinn = pinn.projector.project(&pinn.model, pinn.scaling.p_ref).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let sys = assemble_pressure_system(&s0, &reservoir, c.tau, &load_quadrature(c.degree));
    let p_direct = solve_pressure_direct(&sys).unwrap();
    let report = compare_pressures(&p_pinn, &p_direct, SAMPLE_RESOLUTION);
    (report, history[0], *history.last().unwrap(), secs)
}

fn pinn_uniform() -> Outcome {
    let (r, first, last, secs) = pinn_vs_direct(Preset::Uniform);
    check(
        r.fraction_under_5 >= UNIFORM_FRACTION_UNDER_5 && secs < PINN_SECONDS,
        format!(
            "fraction under 5% {:.3} (min {UNIFORM_FRACTION_UNDER_5}), max {:.3}, mean {:.4}, loss {first:.2e} -> {last:.2e}, {secs:.0} s (limit {PINN_SECONDS} s)",
            r.fraction_under_5, r.max, r.mean
        ),
    )
}

fn pinn_layered() -> Outcome {
    let (r, first, last, secs) = pinn_vs_direct(Preset::Nonuniform);
    check(
        r.max <= LAYERED_MAX && r.fraction_under_20 >= LAYERED_FRACTION_UNDER_20,
        format!(
            "max {:.3} (limit {LAYERED_MAX}), fraction under 20% {:.3} (min {LAYERED_FRACTION_UNDER_20}), mean {:.4}, loss {first:.2e} -> {last:.2e}, {secs:.0} s",
            r.max, r.fraction_under_20, r.mean
        ),
    )
}

fn mass_balance() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut c = SimConfig::for_preset(Preset::Uniform);
    c.steps = MASS_STEPS;
    c.tau = 5000.0;
    c.sources[0].strength = 1e-6;
    c.sources[0].radius = 3.0;
    c.output_dir = dir.path().to_path_buf();
    let start = Instant::now();
    let t = run_direct(&c).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let phi = match c.porosity {
        co2seq::driver::MapSource::Uniform(v) => v,
        _ => unreachable!("uniform preset"),
    };
    let area = c.sources[0].area() / (c.domain.length_x * c.domain.length_y);
    let expected = phi * c.sources[0].strength * area;
    let worst = t
        .mass
        .windows(2)
        .map(|w| ((w[1].2 - w[0].2) - expected).abs() / expected)
        .fold(0.0, f64::max);
    let s = t.final_state.s_g.sample_grid(SAMPLE_RESOLUTION, SAMPLE_RESOLUTION);
    let n = SAMPLE_RESOLUTION - 1;
    let rim = s
        .indexed_iter()
        .filter(|((i, j), _)| *i <= 2 || *j <= 2 || *i >= n - 2 || *j >= n - 2)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    let interior = rim <= 1e-3 * s.iter().fold(0.0f64, |m, v| m.max(*v));
    check(
        worst <= MASS_TOL && interior && secs < MASS_SECONDS,
        format!(
            "{MASS_STEPS} steps, worst per-step deviation {:.3}% (tol {}%), plume interior: {interior}, {secs:.1} s (limit {MASS_SECONDS} s)",
            100.0 * worst,
            100.0 * MASS_TOL
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn per_update(t: &Trajectory, phase: TimingPhase) -> f64 {
    median(
        t.timings
            .iter()
            .filter(|r| r.phase == phase)
            .map(|r| r.seconds)
            .collect(),
    )
}

fn timing_structure() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |mesh: usize, hybrid: bool| {
        let c = SimConfig {
            mesh_elements: mesh,
            collocation_n: 32,
            pretrain_epochs: 1,
            update_epochs: 100,
            steps: 50,
            sample_resolution: 33,
            output_dir: dir.path().join(format!("{mesh}-{hybrid}")),
            ..SimConfig::default()
        };
        if hybrid {
            run_hybrid(&c, None).unwrap()
        } else {
            run_direct(&c).unwrap()
        }
    };
    let (h16, h64) = (run(16, true), run(64, true));
    let (d16, d64) = (run(16, false), run(64, false));
    let required = ["saturation_integration", "pressure_solve", "exchange", "io"];
    let csv = read_timings(&h64.output_dir.join("timings.csv")).unwrap();
    let missing: Vec<&str> = required
        .iter()
        .filter(|l| !csv.iter().any(|r| r.phase.label() == **l))
        .copied()
        .collect();
    let (a, b) = (
        per_update(&h16, TimingPhase::PressureSolve),
        per_update(&h64, TimingPhase::PressureSolve),
    );
    let ratio = b / a;
    let (da, db) = (
        per_update(&d16, TimingPhase::PressureSolve),
        per_update(&d64, TimingPhase::PressureSolve),
    );
    check(
        missing.is_empty() && (1.0 / TIMING_RATIO..=TIMING_RATIO).contains(&ratio),
        format!(
            "phases missing {missing:?}; hybrid training per update {a:.3} s (mesh 16) vs {b:.3} s (mesh 64), ratio {ratio:.2} (allowed {:.2}..{TIMING_RATIO}); direct solve {da:.4} s vs {db:.4} s",
            1.0 / TIMING_RATIO
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"
seed = 17

[mesh]
elements = 16

[time]
steps = 20
cadence = 10

[training]
collocation = 16
pretrain_epochs = 200
update_epochs = 20
learning_rate = 1e-3
layers = [2, 16, 16, 1]

[output]
snapshot_every = 5
resolution = 33
"#;

fn snapshot_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_str().unwrap();
            name.starts_with(FieldKind::Pressure.name()) || name.starts_with(FieldKind::Saturation.name())
        })
        .map(|p| {
            (
                p.file_name().unwrap().to_str().unwrap().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, DETERMINISM_CONFIG).unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let run = Command::new(env!("CARGO_BIN_EXE_co2seq"))
            .args([
                "run-hybrid",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .env("RUST_LOG", "warn")
            .env_remove("CO2SEQ_OUT_ROOT")
            .output()
            .unwrap();
        if !run.status.success() {
            return Err(format!("run-hybrid failed: {}", String::from_utf8_lossy(&run.stderr)));
        }
        outputs.push(snapshot_bytes(&out));
    }
    let identical = outputs[0] == outputs[1];
    check(
        identical && !outputs[0].is_empty(),
        format!("{} snapshot files, bitwise identical: {identical}", outputs[0].len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("spline projection exactness", projection_exactness),
        ("Kronecker solve vs dense oracle", kronecker_oracle),
        ("banded solve vs dense oracle", banded_oracle),
        ("manufactured pressure convergence", pressure_convergence),
        ("robust loss vs dense oracle", robust_loss_oracle),
        ("loss gradient vs finite differences", gradient_check),
        ("residual at the five-point solution", residual_at_solution),
        ("network vs direct pressure, uniform K", pinn_uniform),
        ("network vs direct pressure, layered K", pinn_layered),
        ("mass balance", mass_balance),
        ("timing phases and mesh-independent training cost", timing_structure),
        ("determinism of run-hybrid", determinism),
    ];
    let filter: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|k| k.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
