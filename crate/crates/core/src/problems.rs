//! Manufactured test problems with known optimal state, adjoint and control.
//!
//! Both examples share
//!
//! ```text
//! y(x, t) = e^t (-3 sin(2 pi x1) sin(pi x2) + 1.5 sin(pi x1) sin(2 pi x2))
//! p(x, t) = (T - t) sin(pi x1) sin(pi x2)
//! ```
//!
//! with `nu = a0 = T = 1`. Example 1 uses the spatially constant control
//! `u = (2 e^t (T - t), -e^t (T - t))`; Example 2 uses the divergence-free
//! projection of `p grad y`, computed numerically on a finer reference mesh.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::control::ControlTrajectory;
use crate::error::{Error, Result};
use crate::fem::{interpolate, product_gradient_load, vector_mass_inner, VectorField};
use crate::mesh::{build_unit_square_mesh, Point, TwoLevelMesh};
use crate::optimizer::{ControlProblem, OptimizerSettings, RunOutcome};
use crate::pde::{
    AdjointAdvection, Discretization, LinearizedCoupling, ProblemData, SchemeOptions, SpaceField,
    SpaceTimeField, TimeGrid, Trajectory,
};
use crate::projection::{InnerProduct, ProjectionSettings, ProjectionWorkspace};

pub const NU: f64 = 1.0;
pub const A0: f64 = 1.0;
pub const T_FINAL: f64 = 1.0;

/// Exact state.
pub fn exact_state(x: Point, t: f64) -> f64 {
    t.exp() * (-3.0 * (2.0 * PI * x[0]).sin() * (PI * x[1]).sin()
        + 1.5 * (PI * x[0]).sin() * (2.0 * PI * x[1]).sin())
}

pub fn exact_state_gradient(x: Point, t: f64) -> [f64; 2] {
    let e = t.exp();
    let (s1, c1) = (PI * x[0]).sin_cos();
    let (s2, c2) = (PI * x[1]).sin_cos();
    let (s21, c21) = (2.0 * PI * x[0]).sin_cos();
    let (s22, c22) = (2.0 * PI * x[1]).sin_cos();
    [
        e * PI * (-6.0 * c21 * s2 + 1.5 * c1 * s22),
        e * PI * (-3.0 * s21 * c2 + 3.0 * s1 * c22),
    ]
}

/// Exact adjoint.
pub fn exact_adjoint(x: Point, t: f64) -> f64 {
    (T_FINAL - t) * (PI * x[0]).sin() * (PI * x[1]).sin()
}

pub fn exact_adjoint_gradient(x: Point, t: f64) -> [f64; 2] {
    let (s1, c1) = (PI * x[0]).sin_cos();
    let (s2, c2) = (PI * x[1]).sin_cos();
    [(T_FINAL - t) * PI * c1 * s2, (T_FINAL - t) * PI * s1 * c2]
}

/// Optimal control of Example 1.
pub fn example1_control(t: f64) -> [f64; 2] {
    let a = t.exp() * (T_FINAL - t);
    [2.0 * a, -a]
}

/// Source `y_t - nu lap y + u . grad y + a0 y` for a velocity value `u` at `(x, t)`.
pub fn source_with(x: Point, t: f64, u: [f64; 2]) -> f64 {
    let g = exact_state_gradient(x, t);
    (1.0 + 5.0 * PI * PI * NU + A0) * exact_state(x, t) + u[0] * g[0] + u[1] * g[1]
}

/// Target `y - (1/alpha1)(-p_t - nu lap p - u . grad p + a0 p)`.
pub fn target_with(x: Point, t: f64, u: [f64; 2], alpha1: f64) -> f64 {
    let ss = (PI * x[0]).sin() * (PI * x[1]).sin();
    let p = exact_adjoint(x, t);
    let gp = exact_adjoint_gradient(x, t);
    let residual = ss + 2.0 * PI * PI * NU * p - (u[0] * gp[0] + u[1] * gp[1]) + A0 * p;
    exact_state(x, t) - residual / alpha1
}

fn shared_initial() -> SpaceField {
    SpaceField::Analytic(Arc::new(|x| exact_state(x, 0.0)))
}

/// Problem data of Example 1.
pub fn example1_data(alpha1: f64) -> ProblemData {
    ProblemData {
        nu: NU,
        a0: A0,
        alpha1,
        alpha2: 0.0,
        initial: shared_initial(),
        source: SpaceTimeField::Analytic(Arc::new(|x, t| source_with(x, t, example1_control(t)))),
        boundary: SpaceTimeField::Zero,
        target: SpaceTimeField::Analytic(Arc::new(move |x, t| {
            target_with(x, t, example1_control(t), alpha1)
        })),
        terminal_target: SpaceField::Zero,
    }
}

/// Reference control of Example 2, already restricted to the experiment mesh.
#[derive(Debug, Clone)]
pub struct ReferenceControl {
    pub reference_level: u32,
    /// Entry `n` is the control at `t_n`, `n = 0..=N`.
    pub fields: Vec<VectorField>,
    pub max_inner: usize,
    /// Largest `|B u_n|_inf` on the reference mesh.
    pub max_divergence: f64,
}

impl ReferenceControl {
    /// Steps `1..=N` as a control trajectory.
    pub fn trajectory(&self) -> ControlTrajectory {
        ControlTrajectory::Field(self.fields[1..].to_vec())
    }
}

/// Nodal restriction from a finer nested mesh (every `2^k`-th node in each direction).
pub fn restrict_nodal(values: &[f64], from: &TwoLevelMesh, to: &TwoLevelMesh) -> Result<Vec<f64>> {
    if from.level < to.level {
        return Err(Error::InvalidArgument(format!(
            "cannot restrict from level {} to finer level {}",
            from.level, to.level
        )));
    }
    let stride = 1usize << (from.level - to.level);
    let side = to.fine.cells + 1;
    let mut out = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            out.push(values[from.fine.node_at(i * stride, j * stride)]);
        }
    }
    Ok(out)
}

/// Computes `u_n = P(p grad y)(t_n)` on `reference_level` and restricts it to `mesh`.
pub fn example2_reference(
    mesh: &TwoLevelMesh,
    grid: TimeGrid,
    reference_level: u32,
    settings: ProjectionSettings,
    threads: usize,
) -> Result<ReferenceControl> {
    if reference_level < mesh.level {
        return Err(Error::InvalidArgument(format!(
            "reference level {reference_level} is below the experiment level {}",
            mesh.level
        )));
    }
    let reference = build_unit_square_mesh(reference_level)?;
    let ws = ProjectionWorkspace::new(&reference, settings)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<(VectorField, usize, f64)>> = pool.install(|| {
        (0..=grid.steps)
            .into_par_iter()
            .map(|n| {
                let t = grid.time(n);
                let p = interpolate(&reference.fine, |x| exact_adjoint(x, t));
                let y = interpolate(&reference.fine, |x| exact_state(x, t));
                let load = product_gradient_load(&reference.fine, &p, &y);
                let proj = ws.project_load(&load, None)?;
                let div = ws
                    .divergence_residual(&proj.g)
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                let restricted = VectorField {
                    x: restrict_nodal(&proj.g.x, &reference, mesh)?,
                    y: restrict_nodal(&proj.g.y, &reference, mesh)?,
                };
                Ok((restricted, proj.iterations, div))
            })
            .collect()
    });
    let mut fields = Vec::with_capacity(grid.steps + 1);
    let mut max_inner = 0;
    let mut max_divergence = 0.0f64;
    for r in results {
        let (f, it, div) = r?;
        fields.push(f);
        max_inner = max_inner.max(it);
        max_divergence = max_divergence.max(div);
    }
    Ok(ReferenceControl {
        reference_level,
        fields,
        max_inner,
        max_divergence,
    })
}

/// Problem data of Example 2 for a given reference control on `mesh`.
pub fn example2_data(mesh: &TwoLevelMesh, grid: TimeGrid, reference: &ReferenceControl, alpha1: f64) -> ProblemData {
    let nodes = &mesh.fine.nodes;
    let mut source = Vec::with_capacity(grid.steps + 1);
    let mut target = Vec::with_capacity(grid.steps + 1);
    for (n, u) in reference.fields.iter().enumerate() {
        let t = grid.time(n);
        source.push(
            nodes
                .iter()
                .enumerate()
                .map(|(k, &x)| source_with(x, t, [u.x[k], u.y[k]]))
                .collect(),
        );
        target.push(
            nodes
                .iter()
                .enumerate()
                .map(|(k, &x)| target_with(x, t, [u.x[k], u.y[k]], alpha1))
                .collect(),
        );
    }
    ProblemData {
        nu: NU,
        a0: A0,
        alpha1,
        alpha2: 0.0,
        initial: shared_initial(),
        source: SpaceTimeField::Nodal(source),
        boundary: SpaceTimeField::Zero,
        target: SpaceTimeField::Nodal(target),
        terminal_target: SpaceField::Zero,
    }
}

/// Error measures reported for a computed solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    /// `(dt sum_n |u_n - u(t_n)|^2)^{1/2}`
    pub control: f64,
    /// `(dt sum_n |y_n - I y(t_n)|_M^2)^{1/2}`
    pub state: f64,
    /// `|y - y_d| / |y_d|` over steps `1..=N`.
    pub relative_misfit: f64,
}

/// Errors of `(control, state)` against the exact control and the exact state.
pub fn error_norms(
    disc: &Discretization,
    control: &ControlTrajectory,
    exact_control: &ControlTrajectory,
    state: &Trajectory,
) -> ErrorNorms {
    let dt = disc.dt();
    let mut diff = exact_control.clone();
    diff.axpy(-1.0, control);
    let control_err = diff.norm_sq(&disc.mass, dt).max(0.0).sqrt();
    let mut state_err = 0.0;
    let mut misfit = 0.0;
    let mut target = 0.0;
    for n in 1..=disc.grid.steps {
        let t = disc.grid.time(n);
        let exact = interpolate(&disc.mesh.fine, |x| exact_state(x, t));
        let e: Vec<f64> = state.at(n).iter().zip(&exact).map(|(a, b)| a - b).collect();
        state_err += disc.mass_inner(&e, &e);
        let yd = &disc.targets[n];
        let m: Vec<f64> = state.at(n).iter().zip(yd).map(|(a, b)| a - b).collect();
        misfit += disc.mass_inner(&m, &m);
        target += disc.mass_inner(yd, yd);
    }
    ErrorNorms {
        control: control_err,
        state: (dt * state_err).max(0.0).sqrt(),
        relative_misfit: (misfit / target).max(0.0).sqrt(),
    }
}

/// `|u|` with the norm used for controls of this mode.
pub fn control_norm(disc: &Discretization, u: &ControlTrajectory) -> f64 {
    u.norm_sq(&disc.mass, disc.dt()).max(0.0).sqrt()
}

/// `(u, v)_M` for two single fields on the discretization's mesh.
pub fn field_inner(disc: &Discretization, a: &VectorField, b: &VectorField) -> f64 {
    vector_mass_inner(&disc.mass, a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    One,
    Two,
}

impl Example {
    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            1 => Ok(Example::One),
            2 => Ok(Example::Two),
            other => Err(Error::InvalidArgument(format!("unknown example {other}"))),
        }
    }

    pub fn id(self) -> u32 {
        match self {
            Example::One => 1,
            Example::Two => 2,
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub example: Example,
    pub level: u32,
    /// `N = 2^dt_power` steps on `[0, 1]`.
    pub dt_power: u32,
    pub alpha1: f64,
    pub tol: f64,
    pub tol_pcg: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub reference_level: Option<u32>,
    pub threads: usize,
    pub restart_every: Option<usize>,
    pub warm_start: bool,
    pub adjoint: AdjointAdvection,
    pub linearized: LinearizedCoupling,
    pub inner_product: InnerProduct,
}

impl ExperimentSpec {
    /// Defaults for an example at a level, with `dt = h / 2`.
    pub fn new(example: Example, level: u32) -> Self {
        Self {
            example,
            level,
            dt_power: level + 1,
            alpha1: 1e6,
            tol: match example {
                Example::One => 1e-5,
                Example::Two => 5e-8,
            },
            tol_pcg: 1e-8,
            max_outer: 2000,
            max_inner: 200,
            reference_level: None,
            threads: 0,
            restart_every: None,
            warm_start: false,
            adjoint: AdjointAdvection::Transpose,
            linearized: LinearizedCoupling::Lagged,
            inner_product: InnerProduct::H1,
        }
    }

    pub fn steps(&self) -> usize {
        1usize << self.dt_power
    }

    /// Reference level actually used: level + 2 capped at 8, never below the experiment level.
    pub fn effective_reference_level(&self) -> u32 {
        self.reference_level
            .unwrap_or_else(|| (self.level + 2).min(8).max(self.level))
    }

    pub fn projection_settings(&self) -> ProjectionSettings {
        ProjectionSettings {
            tol: self.tol_pcg,
            max_inner: self.max_inner,
            inner_product: self.inner_product,
        }
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            tol: self.tol,
            max_outer: self.max_outer,
            restart_every: self.restart_every,
            warm_start: self.warm_start,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=12).contains(&self.level) {
            return Err(Error::InvalidArgument(format!("level {} outside 2..=12", self.level)));
        }
        if self.dt_power > 24 {
            return Err(Error::InvalidArgument(format!("dt_power {} too large", self.dt_power)));
        }
        if !(self.alpha1 > 0.0) || !(self.tol > 0.0) || !(self.tol_pcg > 0.0) {
            return Err(Error::InvalidArgument(
                "alpha1, tol and tol_pcg must be positive".into(),
            ));
        }
        if let Some(r) = self.reference_level {
            if r < self.level {
                return Err(Error::InvalidArgument(format!(
                    "reference_level {r} below level {}",
                    self.level
                )));
            }
        }
        Ok(())
    }
}

/// A set-up experiment: discretized problem plus the exact control to compare against.
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub problem: ControlProblem,
    pub exact_control: ControlTrajectory,
    pub reference: Option<ReferenceControl>,
}

impl Experiment {
    pub fn new(spec: ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let mesh = Arc::new(build_unit_square_mesh(spec.level)?);
        let grid = TimeGrid::new(T_FINAL, spec.steps())?;
        let options = SchemeOptions {
            adjoint: spec.adjoint,
            linearized: spec.linearized,
            allow_zero_tracking: false,
        };
        let (data, exact_control, reference, projection) = match spec.example {
            Example::One => {
                let exact = ControlTrajectory::FiniteDim(
                    (1..=grid.steps).map(|n| example1_control(grid.time(n))).collect(),
                );
                (example1_data(spec.alpha1), exact, None, None)
            }
            Example::Two => {
                let reference = example2_reference(
                    &mesh,
                    grid,
                    spec.effective_reference_level(),
                    spec.projection_settings(),
                    spec.threads,
                )?;
                let data = example2_data(&mesh, grid, &reference, spec.alpha1);
                let ws = ProjectionWorkspace::new(&mesh, spec.projection_settings())?;
                (data, reference.trajectory(), Some(reference), Some(ws))
            }
        };
        let disc = Discretization::with_options(mesh, grid, &data, options)?;
        let problem = ControlProblem::new(disc, projection, spec.threads)?;
        Ok(Self {
            spec,
            problem,
            exact_control,
            reference,
        })
    }

    pub fn initial_control(&self) -> ControlTrajectory {
        let d = &self.problem.disc;
        match self.spec.example {
            Example::One => ControlTrajectory::zero_finite(d.grid.steps),
            Example::Two => ControlTrajectory::zero_field(d.grid.steps, d.num_nodes()),
        }
    }

    pub fn run(&self) -> Result<ExperimentResult> {
        let outcome = self
            .problem
            .run(self.initial_control(), &self.spec.optimizer_settings())?;
        let errors = error_norms(
            &self.problem.disc,
            &outcome.control,
            &self.exact_control,
            &outcome.state,
        );
        Ok(ExperimentResult { outcome, errors })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub outcome: RunOutcome,
    pub errors: ErrorNorms,
}

/// Sets up and runs an experiment.
pub fn run_experiment(spec: ExperimentSpec) -> Result<(Experiment, ExperimentResult)> {
    let exp = Experiment::new(spec)?;
    let res = exp.run()?;
    Ok((exp, res))
}
