//! Nested conjugate-gradient minimization of the discrete objective.
//!
//! The outer loop is Fletcher-Reeves CG on the control trajectory. Each
//! gradient costs one state solve, one adjoint solve and (in field mode) one
//! divergence-free projection per time step; each step size one linearized
//! solve.

use crate::control::ControlTrajectory;
use crate::error::{Error, Result};
use crate::fem::{field_times_gradient_integral, VectorField};
use crate::pde::{Discretization, Trajectory};
use crate::projection::ProjectionWorkspace;
use rayon::prelude::*;

/// Steps below this size abort the run.
pub const MIN_STEPSIZE: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub tol: f64,
    pub max_outer: usize,
    /// Reset the search direction to the gradient every this many iterations.
    pub restart_every: Option<usize>,
    /// Start each projection from the previous multiplier at the same time step.
    pub warm_start: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_outer: 2000,
            restart_every: None,
            warm_start: false,
        }
    }
}

/// One outer iterate. `stepsize` is the step that produced it (absent for `u^0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm_sq: f64,
    pub stepsize: Option<f64>,
    pub max_inner: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxOuter,
    /// The step size fell below [`MIN_STEPSIZE`].
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub control: ControlTrajectory,
    pub state: Trajectory,
}

impl RunOutcome {
    pub fn max_inner(&self) -> usize {
        self.history.iter().map(|r| r.max_inner).max().unwrap_or(0)
    }

    pub fn final_ratio(&self) -> f64 {
        let g0 = self.history[0].grad_norm_sq;
        let last = self.history.last().unwrap().grad_norm_sq;
        if g0 > 0.0 {
            last / g0
        } else {
            0.0
        }
    }
}

/// Gradient of the objective together with diagnostic data.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub g: ControlTrajectory,
    pub adjoint: Trajectory,
    /// Multipliers of the projections, one per step (field mode only).
    pub multipliers: Vec<Vec<f64>>,
    pub max_inner: usize,
}

/// A discretized control problem ready for optimization.
pub struct ControlProblem {
    pub disc: Discretization,
    /// Present exactly for velocity-field controls.
    pub projection: Option<ProjectionWorkspace>,
    pool: rayon::ThreadPool,
}

impl ControlProblem {
    /// `threads = 0` uses all available cores.
    pub fn new(disc: Discretization, projection: Option<ProjectionWorkspace>, threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(Self {
            disc,
            projection,
            pool,
        })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn check_mode(&self, control: &ControlTrajectory) -> Result<()> {
        if control.is_field() != self.projection.is_some() {
            return Err(Error::InvalidArgument(
                "control mode does not match the problem".into(),
            ));
        }
        Ok(())
    }

    /// `dt * sum_n |v_n|^2`.
    pub fn control_norm_sq(&self, v: &ControlTrajectory) -> f64 {
        v.norm_sq(&self.disc.mass, self.disc.dt())
    }

    pub fn control_inner(&self, a: &ControlTrajectory, b: &ControlTrajectory) -> f64 {
        a.inner(b, &self.disc.mass, self.disc.dt())
    }

    /// Objective value for a control whose state is already known.
    pub fn objective_with_state(&self, control: &ControlTrajectory, state: &Trajectory) -> f64 {
        let (running, terminal) = self.disc.tracking_terms(state);
        0.5 * self.control_norm_sq(control)
            + 0.5 * self.disc.alpha1 * running
            + 0.5 * self.disc.alpha2 * terminal
    }

    pub fn objective(&self, control: &ControlTrajectory) -> Result<f64> {
        self.check_mode(control)?;
        let state = self.disc.solve_state(control)?;
        Ok(self.objective_with_state(control, &state))
    }

    /// Gradient at `control` with state `state`. `lambda0` warm-starts the projections.
    pub fn gradient(
        &self,
        control: &ControlTrajectory,
        state: &Trajectory,
        lambda0: Option<&[Vec<f64>]>,
    ) -> Result<Gradient> {
        self.check_mode(control)?;
        let adjoint = self.disc.solve_adjoint(control, state)?;
        let steps = self.disc.grid.steps;
        match control {
            ControlTrajectory::FiniteDim(v) => {
                let fine = &self.disc.mesh.fine;
                let g = (1..=steps)
                    .map(|n| {
                        let s = field_times_gradient_integral(fine, state.at(n - 1), adjoint.at(n));
                        [v[n - 1][0] + s[0], v[n - 1][1] + s[1]]
                    })
                    .collect();
                Ok(Gradient {
                    g: ControlTrajectory::FiniteDim(g),
                    adjoint,
                    multipliers: Vec::new(),
                    max_inner: 0,
                })
            }
            ControlTrajectory::Field(v) => {
                let ws = self.projection.as_ref().expect("field mode has a projection");
                let disc = &self.disc;
                let adj = &adjoint;
                let results: Vec<Result<(VectorField, Vec<f64>, usize)>> = self.pool.install(|| {
                    (1..=steps)
                        .into_par_iter()
                        .map(|n| {
                            let load = disc.gradient_load(&v[n - 1], adj.at(n), state.at(n - 1));
                            let l0 = lambda0.map(|l| l[n - 1].as_slice());
                            let p = ws.project_load(&load, l0)?;
                            Ok((p.g, p.multiplier, p.iterations))
                        })
                        .collect()
                });
                let mut g = Vec::with_capacity(steps);
                let mut multipliers = Vec::with_capacity(steps);
                let mut max_inner = 0;
                for r in results {
                    let (gn, lam, it) = r?;
                    g.push(gn);
                    multipliers.push(lam);
                    max_inner = max_inner.max(it);
                }
                Ok(Gradient {
                    g: ControlTrajectory::Field(g),
                    adjoint,
                    multipliers,
                    max_inner,
                })
            }
        }
    }

    /// Exact minimizer of the quadratic model along `-w`, given the linearized state `z`.
    pub fn stepsize(&self, g: &ControlTrajectory, w: &ControlTrajectory, z: &Trajectory) -> Result<f64> {
        let d = &self.disc;
        let running = d.dt() * (1..=d.grid.steps).map(|n| d.mass_inner(z.at(n), z.at(n))).sum::<f64>();
        let zn = z.at(d.grid.steps);
        let denom = self.control_norm_sq(w) + d.alpha1 * running + d.alpha2 * d.mass_inner(zn, zn);
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::DegenerateDirection(format!(
                "step size denominator is {denom}"
            )));
        }
        Ok(self.control_inner(g, w) / denom)
    }

    /// Runs the nested CG iteration from `u0`.
    pub fn run(&self, u0: ControlTrajectory, settings: &OptimizerSettings) -> Result<RunOutcome> {
        self.check_mode(&u0)?;
        if !(settings.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        let mut u = u0;
        let mut y = self.disc.solve_state(&u)?;
        let mut grad = self.gradient(&u, &y, None)?;
        let g0 = self.control_norm_sq(&grad.g);
        let mut history = vec![IterationRecord {
            iteration: 0,
            objective: self.objective_with_state(&u, &y),
            grad_norm_sq: g0,
            stepsize: None,
            max_inner: grad.max_inner,
        }];
        if g0 == 0.0 {
            return Ok(RunOutcome {
                status: RunStatus::Converged,
                iterations: 0,
                history,
                control: u,
                state: y,
            });
        }
        let mut gsq = g0;
        let mut w = grad.g.clone();
        for k in 0..settings.max_outer {
            let z = self.disc.solve_linearized(&u, &w, &y)?;
            let rho = self.stepsize(&grad.g, &w, &z)?;
            if !(rho >= MIN_STEPSIZE) {
                return Ok(RunOutcome {
                    status: RunStatus::Degenerate,
                    iterations: k,
                    history,
                    control: u,
                    state: y,
                });
            }
            u.axpy(-rho, &w);
            if !u.is_finite() {
                return Err(Error::Instability { step: 0 });
            }
            y = self.disc.solve_state(&u)?;
            let lambda0 = if settings.warm_start && !grad.multipliers.is_empty() {
                Some(std::mem::take(&mut grad.multipliers))
            } else {
                None
            };
            grad = self.gradient(&u, &y, lambda0.as_deref())?;
            let gsq_new = self.control_norm_sq(&grad.g);
            history.push(IterationRecord {
                iteration: k + 1,
                objective: self.objective_with_state(&u, &y),
                grad_norm_sq: gsq_new,
                stepsize: Some(rho),
                max_inner: grad.max_inner,
            });
            if gsq_new / g0 <= settings.tol {
                return Ok(RunOutcome {
                    status: RunStatus::Converged,
                    iterations: k + 1,
                    history,
                    control: u,
                    state: y,
                });
            }
            let restart = settings.restart_every.is_some_and(|r| r > 0 && (k + 1) % r == 0);
            let beta = if restart { 0.0 } else { gsq_new / gsq };
            gsq = gsq_new;
            let mut next = grad.g.clone();
            next.axpy(beta, &w);
            w = next;
        }
        Ok(RunOutcome {
            status: RunStatus::MaxOuter,
            iterations: settings.max_outer,
            history,
            control: u,
            state: y,
        })
    }
}
