//! Self-checks on small meshes, shared by the `verify` command and the test suites.
//!
//! Each check returns a measured residual and the threshold it must meet.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::ControlTrajectory;
use crate::error::Result;
use crate::fem::{interpolate, VectorField};
use crate::mesh::{build_unit_square_mesh, Point, TwoLevelMesh};
use crate::optimizer::ControlProblem;
use crate::pde::{Discretization, ProblemData, SpaceField, SpaceTimeField, TimeGrid};
use crate::projection::{dense_saddle_oracle, ProjectionSettings, ProjectionWorkspace};

/// Inner tolerance used when a check needs the projection solved to round-off.
pub const TIGHT_PCG_TOL: f64 = 1e-20;
/// Inner tolerance for the finite-difference gradient checks.
pub const FD_PCG_TOL: f64 = 1e-14;
pub const FD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.threshold
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} {:.3e} (threshold {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_nodal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_field(rng: &mut ChaCha8Rng, n: usize) -> VectorField {
    VectorField {
        x: random_nodal(rng, n),
        y: random_nodal(rng, n),
    }
}

pub fn random_field_control(rng: &mut ChaCha8Rng, steps: usize, n: usize) -> ControlTrajectory {
    ControlTrajectory::Field((0..steps).map(|_| random_field(rng, n)).collect())
}

pub fn random_finite_control(rng: &mut ChaCha8Rng, steps: usize) -> ControlTrajectory {
    ControlTrajectory::FiniteDim(
        (0..steps)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect(),
    )
}

/// Discretely divergence-free fields obtained by projecting random ones.
pub fn random_divfree_control(
    rng: &mut ChaCha8Rng,
    ws: &ProjectionWorkspace,
    steps: usize,
    n: usize,
) -> Result<ControlTrajectory> {
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(ws.project(&random_field(rng, n), None)?.g);
    }
    Ok(ControlTrajectory::Field(out))
}

fn sine(p: Point) -> f64 {
    (PI * p[0]).sin() * (PI * p[1]).sin()
}

/// Random targets, initial state and tracking weights on `mesh`.
pub fn random_problem_data(rng: &mut ChaCha8Rng, mesh: &TwoLevelMesh, steps: usize) -> ProblemData {
    let n = mesh.fine.num_nodes();
    let interior_only = |v: Vec<f64>| -> Vec<f64> {
        v.into_iter()
            .zip(&mesh.fine.boundary)
            .map(|(x, &b)| if b { 0.0 } else { x })
            .collect()
    };
    ProblemData {
        nu: 1.0,
        a0: 1.0,
        alpha1: 1.0,
        alpha2: 0.5,
        initial: SpaceField::Nodal(interior_only(random_nodal(rng, n))),
        source: SpaceTimeField::Nodal((0..=steps).map(|_| random_nodal(rng, n)).collect()),
        boundary: SpaceTimeField::Zero,
        target: SpaceTimeField::Nodal((0..=steps).map(|_| random_nodal(rng, n)).collect()),
        terminal_target: SpaceField::Nodal(random_nodal(rng, n)),
    }
}

fn projection(mesh: &TwoLevelMesh, tol: f64) -> Result<ProjectionWorkspace> {
    ProjectionWorkspace::new(
        mesh,
        ProjectionSettings {
            tol,
            ..Default::default()
        },
    )
}

/// Projection against the dense saddle-point solve, M-norm of the difference relative to the result.
pub fn oracle_check() -> Result<Check> {
    let mesh = build_unit_square_mesh(3)?;
    let ws = projection(&mesh, TIGHT_PCG_TOL)?;
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let v = random_field(&mut r, mesh.fine.num_nodes());
        let g = ws.project(&v, None)?.g;
        let mut d = dense_saddle_oracle(&mesh, &v)?;
        d.axpy(-1.0, &g);
        worst = worst.max(ws.mass_norm(&d) / ws.mass_norm(&g));
    }
    Ok(Check {
        name: "projection vs dense oracle",
        value: worst,
        threshold: 1e-8,
    })
}

/// `|P(P v) - P v|_M / |P v|_M`.
pub fn idempotence_check() -> Result<Check> {
    let mesh = build_unit_square_mesh(5)?;
    let ws = projection(&mesh, TIGHT_PCG_TOL)?;
    let mut r = rng(12);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let v = random_field(&mut r, mesh.fine.num_nodes());
        let g = ws.project(&v, None)?.g;
        let mut gg = ws.project(&g, None)?.g;
        gg.axpy(-1.0, &g);
        worst = worst.max(ws.mass_norm(&gg) / ws.mass_norm(&g));
    }
    Ok(Check {
        name: "projection idempotence",
        value: worst,
        threshold: 1e-9,
    })
}

/// Both sides of the discrete duality identity for a control `u` and direction `w`.
pub fn duality_sides(disc: &Discretization, u: &ControlTrajectory, w: &ControlTrajectory) -> Result<(f64, f64)> {
    let y = disc.solve_state(u)?;
    let p = disc.solve_adjoint(u, &y)?;
    let z = disc.solve_linearized(u, w, &y)?;
    let steps = disc.grid.steps;
    let dt = disc.dt();
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let mut running = 0.0;
    for n in 1..=steps {
        running += disc.mass_inner(&diff(y.at(n), &disc.targets[n]), z.at(n));
    }
    let lhs = disc.alpha1 * dt * running
        + disc.alpha2 * disc.mass_inner(&diff(y.at(steps), &disc.terminal_target), z.at(steps));
    let mut adv = vec![0.0; disc.num_nodes()];
    let mut rhs = 0.0;
    for n in 1..=steps {
        disc.advect(w.slice(n), y.at(n - 1), &mut adv);
        rhs -= crate::linalg::dot(p.at(n), &adv);
    }
    Ok((lhs, dt * rhs))
}

/// Duality identity on level 4 with N = 16 and random data, in both control modes.
pub fn duality_check() -> Result<Check> {
    let mesh = Arc::new(build_unit_square_mesh(4)?);
    let steps = 16;
    let grid = TimeGrid::new(1.0, steps)?;
    let mut r = rng(13);
    let data = random_problem_data(&mut r, &mesh, steps);
    let disc = Discretization::new(mesh.clone(), grid, &data)?;
    let n = mesh.fine.num_nodes();
    let mut worst: f64 = 0.0;
    for field in [true, false] {
        let (u, w) = if field {
            (random_field_control(&mut r, steps, n), random_field_control(&mut r, steps, n))
        } else {
            (random_finite_control(&mut r, steps), random_finite_control(&mut r, steps))
        };
        let (lhs, rhs) = duality_sides(&disc, &u, &w)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    Ok(Check {
        name: "adjoint duality",
        value: worst,
        threshold: 1e-11,
    })
}

/// Central difference of the objective along `w` against `(g, w)`, relative.
pub fn fd_gradient_error(
    problem: &ControlProblem,
    u: &ControlTrajectory,
    w: &ControlTrajectory,
    eps: f64,
) -> Result<f64> {
    let y = problem.disc.solve_state(u)?;
    let g = problem.gradient(u, &y, None)?.g;
    let analytic = problem.control_inner(&g, w);
    let mut up = u.clone();
    up.axpy(eps, w);
    let mut um = u.clone();
    um.axpy(-eps, w);
    let fd = (problem.objective(&up)? - problem.objective(&um)?) / (2.0 * eps);
    Ok((fd - analytic).abs() / analytic.abs().max(fd.abs()))
}

fn smooth_data() -> ProblemData {
    ProblemData {
        nu: 1.0,
        a0: 1.0,
        alpha1: 10.0,
        alpha2: 1.0,
        initial: SpaceField::Analytic(Arc::new(sine)),
        source: SpaceTimeField::Analytic(Arc::new(|p: Point, t: f64| (1.0 + t) * sine(p))),
        boundary: SpaceTimeField::Zero,
        target: SpaceTimeField::Analytic(Arc::new(|p: Point, t: f64| {
            (2.0 * PI * p[0]).sin() * (PI * p[1]).sin() * (1.0 - t)
        })),
        terminal_target: SpaceField::Analytic(Arc::new(|p: Point| p[0] * (1.0 - p[0]) * p[1])),
    }
}

/// Finite-difference gradient check with velocity-field controls.
pub fn fd_field_check() -> Result<Check> {
    let mesh = Arc::new(build_unit_square_mesh(4)?);
    let steps = 8;
    let grid = TimeGrid::new(1.0, steps)?;
    let disc = Discretization::new(mesh.clone(), grid, &smooth_data())?;
    let ws = projection(&mesh, FD_PCG_TOL)?;
    let n = mesh.fine.num_nodes();
    let mut r = rng(14);
    let u = random_divfree_control(&mut r, &ws, steps, n)?;
    let w = random_divfree_control(&mut r, &ws, steps, n)?;
    let problem = ControlProblem::new(disc, Some(ws), 1)?;
    Ok(Check {
        name: "fd gradient (field)",
        value: fd_gradient_error(&problem, &u, &w, FD_EPS)?,
        threshold: 1e-4,
    })
}

/// Finite-difference gradient check with spatially constant controls.
pub fn fd_finite_check() -> Result<Check> {
    let mesh = Arc::new(build_unit_square_mesh(4)?);
    let steps = 8;
    let grid = TimeGrid::new(1.0, steps)?;
    let disc = Discretization::new(mesh.clone(), grid, &smooth_data())?;
    let mut r = rng(15);
    let u = random_finite_control(&mut r, steps);
    let w = random_finite_control(&mut r, steps);
    let problem = ControlProblem::new(disc, None, 1)?;
    Ok(Check {
        name: "fd gradient (finite-dim)",
        value: fd_gradient_error(&problem, &u, &w, FD_EPS)?,
        threshold: 1e-4,
    })
}

fn heat_data(a0: f64) -> ProblemData {
    ProblemData {
        nu: 1.0,
        a0,
        alpha1: 1.0,
        alpha2: 0.0,
        initial: SpaceField::Analytic(Arc::new(sine)),
        source: SpaceTimeField::Zero,
        boundary: SpaceTimeField::Zero,
        target: SpaceTimeField::Zero,
        terminal_target: SpaceField::Zero,
    }
}

/// Zero-control heat decay against `exp(-2 pi^2 T) sin sin` at T = 0.1, level 5.
pub fn heat_check() -> Result<Check> {
    let mesh = Arc::new(build_unit_square_mesh(5)?);
    let steps = 6;
    let grid = TimeGrid::new(0.1, steps)?;
    let disc = Discretization::new(mesh, grid, &heat_data(0.0))?;
    let y = disc.solve_state(&ControlTrajectory::zero_finite(steps))?;
    let decay = (-2.0 * PI * PI * 0.1f64).exp();
    let err: Vec<f64> = y.at(steps).iter().zip(&disc.initial).map(|(a, b)| a - decay * b).collect();
    Ok(Check {
        name: "heat benchmark",
        value: disc.mass_inner(&err, &err).sqrt() / disc.mass_inner(&disc.initial, &disc.initial).sqrt(),
        threshold: 5e-2,
    })
}

/// `|y_n|_M` for f = 0 with a divergence-free stirring velocity at level 5, dt = 1/64.
pub fn stability_norms() -> Result<Vec<f64>> {
    let mesh = Arc::new(build_unit_square_mesh(5)?);
    let steps = 64;
    let grid = TimeGrid::new(1.0, steps)?;
    let disc = Discretization::new(mesh.clone(), grid, &heat_data(1.0))?;
    let ws = projection(&mesh, TIGHT_PCG_TOL)?;
    // curl of sin^2(pi x) sin^2(pi y) / 2
    let stir = VectorField {
        x: interpolate(&mesh.fine, |p| {
            (PI * p[0]).sin().powi(2) * (2.0 * PI * p[1]).sin() * PI
        }),
        y: interpolate(&mesh.fine, |p| {
            -(2.0 * PI * p[0]).sin() * PI * (PI * p[1]).sin().powi(2)
        }),
    };
    let v = ws.project(&stir, None)?.g;
    let u = ControlTrajectory::Field(vec![v; steps]);
    let y = disc.solve_state(&u)?;
    Ok((0..=steps).map(|n| disc.mass_inner(y.at(n), y.at(n)).sqrt()).collect())
}

/// Largest relative increase of `|y_n|_M` between consecutive steps (0 when non-increasing).
pub fn stability_check() -> Result<Check> {
    let norms = stability_norms()?;
    let worst = norms
        .windows(2)
        .map(|w| ((w[1] - w[0]) / w[0]).max(0.0))
        .fold(0.0, f64::max);
    Ok(Check {
        name: "energy decay (f = 0)",
        value: worst,
        threshold: 0.0,
    })
}

/// All checks of the `verify` command.
pub fn run_all() -> Result<Vec<Check>> {
    Ok(vec![
        oracle_check()?,
        idempotence_check()?,
        duality_check()?,
        fd_field_check()?,
        fd_finite_check()?,
        heat_check()?,
        stability_check()?,
    ])
}
