//! Semi-implicit time stepping for the state, adjoint and linearized problems.
//!
//! Every step solves `(M/dt + nu K) x = rhs` on the interior nodes; advection and
//! reaction are explicit, diffusion implicit. The interior system matrix is
//! factored once per [`Discretization`] and reused by all three solvers.

use std::sync::Arc;

use crate::control::{ControlSlice, ControlTrajectory};
use crate::error::{Error, Result};
use crate::fem::{
    advection_apply, advection_apply_transpose, derivative_operators, mass_matrix,
    stiffness_matrix, VectorField,
};
use crate::linalg::EnvelopeCholesky;
use crate::mesh::{interior_dof_map, DofMap, Level, Point, TwoLevelMesh};
use crate::sparse::SparseOperator;

/// Uniform time grid `t_n = n T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_final > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time grid needs T > 0 and N >= 1 (got T = {t_final}, N = {steps})"
            )));
        }
        Ok(Self { t_final, steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t_final * n as f64 / self.steps as f64
    }
}

pub type SpaceFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

/// A function of space, given analytically or as fine-mesh nodal values.
#[derive(Clone)]
pub enum SpaceField {
    Zero,
    Analytic(SpaceFn),
    Nodal(Vec<f64>),
}

/// A function of space and time; nodal data is indexed by time step `0..=N`.
#[derive(Clone)]
pub enum SpaceTimeField {
    Zero,
    Analytic(SpaceTimeFn),
    Nodal(Vec<Vec<f64>>),
}

impl SpaceField {
    fn sample(&self, nodes: &[Point]) -> Result<Vec<f64>> {
        match self {
            SpaceField::Zero => Ok(vec![0.0; nodes.len()]),
            SpaceField::Analytic(f) => Ok(nodes.iter().map(|&p| f(p)).collect()),
            SpaceField::Nodal(v) => {
                if v.len() != nodes.len() {
                    return Err(Error::DimensionMismatch {
                        expected: nodes.len(),
                        got: v.len(),
                    });
                }
                Ok(v.clone())
            }
        }
    }
}

impl SpaceTimeField {
    pub fn is_zero(&self) -> bool {
        matches!(self, SpaceTimeField::Zero)
    }

    fn sample(&self, nodes: &[Point], n: usize, t: f64) -> Result<Vec<f64>> {
        match self {
            SpaceTimeField::Zero => Ok(vec![0.0; nodes.len()]),
            SpaceTimeField::Analytic(f) => Ok(nodes.iter().map(|&p| f(p, t)).collect()),
            SpaceTimeField::Nodal(v) => {
                let slice = v.get(n).ok_or_else(|| {
                    Error::InvalidArgument(format!("nodal data has no time step {n}"))
                })?;
                if slice.len() != nodes.len() {
                    return Err(Error::DimensionMismatch {
                        expected: nodes.len(),
                        got: slice.len(),
                    });
                }
                Ok(slice.clone())
            }
        }
    }
}

/// Coefficients and data of the controlled problem.
#[derive(Clone)]
pub struct ProblemData {
    pub nu: f64,
    pub a0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub initial: SpaceField,
    pub source: SpaceTimeField,
    pub boundary: SpaceTimeField,
    pub target: SpaceTimeField,
    pub terminal_target: SpaceField,
}

impl ProblemData {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(Error::InvalidArgument("tracking weights must be non-negative".into()));
        }
        if !(self.alpha1 + self.alpha2 > 0.0) {
            return Err(Error::InvalidArgument("alpha1 + alpha2 must be positive".into()));
        }
        Ok(())
    }
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData")
            .field("nu", &self.nu)
            .field("a0", &self.a0)
            .field("alpha1", &self.alpha1)
            .field("alpha2", &self.alpha2)
            .finish_non_exhaustive()
    }
}

/// How the adjoint scheme discretizes its advection term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointAdvection {
    /// `-C(v_{n+1})^T p_{n+1}`: the exact transpose of the state scheme.
    #[default]
    Transpose,
    /// `+\int (v_{n+1} . grad p_{n+1}) phi`: equal to the transpose only for
    /// pointwise divergence-free `v`.
    Direct,
}

/// Which state the linearized scheme advects with the direction `w_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearizedCoupling {
    /// `C(w_n) y_{n-1}`: the exact derivative of the state scheme.
    #[default]
    Lagged,
    /// `C(w_n) y_n`.
    Current,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SchemeOptions {
    pub adjoint: AdjointAdvection,
    pub linearized: LinearizedCoupling,
    /// Skip the `alpha1 + alpha2 > 0` check (used by tests of the control term alone).
    pub allow_zero_tracking: bool,
}

/// Time-indexed nodal fields `first..first + len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub first: usize,
    pub fields: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn at(&self, n: usize) -> &[f64] {
        &self.fields[n - self.first]
    }

    pub fn last_index(&self) -> usize {
        self.first + self.fields.len() - 1
    }
}

/// Mesh, time grid, assembled operators and sampled data for one problem.
pub struct Discretization {
    pub mesh: Arc<TwoLevelMesh>,
    pub grid: TimeGrid,
    pub nu: f64,
    pub a0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub options: SchemeOptions,
    pub mass: SparseOperator,
    pub stiffness: SparseOperator,
    /// `M/dt + nu K` on all fine nodes.
    pub system: SparseOperator,
    pub interior: DofMap,
    system_factor: EnvelopeCholesky,
    derivs: [SparseOperator; 2],
    derivs_t: [SparseOperator; 2],
    pub initial: Vec<f64>,
    /// `M f_n`, index `0..=N`.
    loads: Vec<Vec<f64>>,
    /// Dirichlet data per step; `None` when homogeneous.
    boundary: Option<Vec<Vec<f64>>>,
    /// `y_d^n`, index `0..=N`.
    pub targets: Vec<Vec<f64>>,
    pub terminal_target: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: Arc<TwoLevelMesh>, grid: TimeGrid, data: &ProblemData) -> Result<Self> {
        Self::with_options(mesh, grid, data, SchemeOptions::default())
    }

    pub fn with_options(
        mesh: Arc<TwoLevelMesh>,
        grid: TimeGrid,
        data: &ProblemData,
        options: SchemeOptions,
    ) -> Result<Self> {
        if options.allow_zero_tracking {
            if !(data.nu > 0.0) || data.alpha1 < 0.0 || data.alpha2 < 0.0 {
                return Err(Error::InvalidArgument("invalid coefficients".into()));
            }
        } else {
            data.validate()?;
        }
        let fine = &mesh.fine;
        let mass = mass_matrix(fine);
        let stiffness = stiffness_matrix(fine);
        let dt = grid.dt();
        let system = mass.add_scaled(1.0 / dt, &stiffness, data.nu);
        let interior = interior_dof_map(&mesh, Level::Fine);
        let system_factor =
            EnvelopeCholesky::new(&system.submatrix(&interior.dof_to_node, &interior.dof_to_node))?;
        let derivs = derivative_operators(fine);
        let derivs_t = [derivs[0].transpose(), derivs[1].transpose()];

        let nodes = &fine.nodes;
        let initial = data.initial.sample(nodes)?;
        let mut loads = Vec::with_capacity(grid.steps + 1);
        let mut targets = Vec::with_capacity(grid.steps + 1);
        for n in 0..=grid.steps {
            let t = grid.time(n);
            loads.push(mass.mul_vec(&data.source.sample(nodes, n, t)?));
            targets.push(data.target.sample(nodes, n, t)?);
        }
        let boundary = if data.boundary.is_zero() {
            None
        } else {
            let mut b = Vec::with_capacity(grid.steps + 1);
            for n in 0..=grid.steps {
                let mut g = data.boundary.sample(nodes, n, grid.time(n))?;
                for (k, v) in g.iter_mut().enumerate() {
                    if !fine.boundary[k] {
                        *v = 0.0;
                    }
                }
                b.push(g);
            }
            Some(b)
        };
        let terminal_target = data.terminal_target.sample(nodes)?;
        Ok(Self {
            nu: data.nu,
            a0: data.a0,
            alpha1: data.alpha1,
            alpha2: data.alpha2,
            options,
            mass,
            stiffness,
            system,
            interior,
            system_factor,
            derivs,
            derivs_t,
            initial,
            loads,
            boundary,
            targets,
            terminal_target,
            mesh,
            grid,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.fine.num_nodes()
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    /// `out = C(v) y`.
    pub fn advect(&self, v: ControlSlice<'_>, y: &[f64], out: &mut [f64]) {
        match v {
            ControlSlice::Field(f) => advection_apply(&self.mesh.fine, f, y, out),
            ControlSlice::Constant(c) => {
                let a = self.derivs[0].mul_vec(y);
                let b = self.derivs[1].mul_vec(y);
                for ((o, a), b) in out.iter_mut().zip(a).zip(b) {
                    *o = c[0] * a + c[1] * b;
                }
            }
        }
    }

    /// `out = C(v)^T p`.
    pub fn advect_transpose(&self, v: ControlSlice<'_>, p: &[f64], out: &mut [f64]) {
        match v {
            ControlSlice::Field(f) => advection_apply_transpose(&self.mesh.fine, f, p, out),
            ControlSlice::Constant(c) => {
                let a = self.derivs_t[0].mul_vec(p);
                let b = self.derivs_t[1].mul_vec(p);
                for ((o, a), b) in out.iter_mut().zip(a).zip(b) {
                    *o = c[0] * a + c[1] * b;
                }
            }
        }
    }

    fn check_control(&self, control: &ControlTrajectory) -> Result<()> {
        if control.steps() != self.grid.steps {
            return Err(Error::DimensionMismatch {
                expected: self.grid.steps,
                got: control.steps(),
            });
        }
        if let ControlTrajectory::Field(v) = control {
            for f in v {
                if f.len() != self.num_nodes() {
                    return Err(Error::DimensionMismatch {
                        expected: self.num_nodes(),
                        got: f.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Solves `A_II x_I = rhs_I` and returns the nodal vector with the given boundary values.
    fn interior_solve(&self, rhs: &[f64], boundary: Option<&[f64]>, step: usize) -> Result<Vec<f64>> {
        let mut x = self.interior.restrict(rhs);
        if let Some(g) = boundary {
            let lift = self.system.mul_vec(g);
            for (xi, &node) in x.iter_mut().zip(&self.interior.dof_to_node) {
                *xi -= lift[node];
            }
        }
        self.system_factor.solve_in_place(&mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Instability { step });
        }
        let mut out = match boundary {
            Some(g) => g.to_vec(),
            None => vec![0.0; rhs.len()],
        };
        self.interior.scatter(&x, &mut out);
        Ok(out)
    }

    /// `(1/dt - a0) M x`
    fn explicit_mass(&self, x: &[f64]) -> Vec<f64> {
        let s = 1.0 / self.dt() - self.a0;
        self.mass.mul_vec(x).into_iter().map(|v| s * v).collect()
    }

    /// Forward state `y_0..y_N`.
    pub fn solve_state(&self, control: &ControlTrajectory) -> Result<Trajectory> {
        self.check_control(control)?;
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::Instability { step: 0 });
        }
        let n_nodes = self.num_nodes();
        let mut fields = Vec::with_capacity(self.grid.steps + 1);
        fields.push(self.initial.clone());
        let mut adv = vec![0.0; n_nodes];
        for n in 1..=self.grid.steps {
            let prev = &fields[n - 1];
            let mut rhs = self.explicit_mass(prev);
            self.advect(control.slice(n), prev, &mut adv);
            for ((r, a), f) in rhs.iter_mut().zip(&adv).zip(&self.loads[n]) {
                *r += f - a;
            }
            let g = self.boundary.as_ref().map(|b| b[n].as_slice());
            let y = self.interior_solve(&rhs, g, n)?;
            fields.push(y);
        }
        Ok(Trajectory { first: 0, fields })
    }

    /// Backward adjoint `p_1..p_{N+1}`.
    pub fn solve_adjoint(&self, control: &ControlTrajectory, state: &Trajectory) -> Result<Trajectory> {
        self.check_control(control)?;
        let steps = self.grid.steps;
        let n_nodes = self.num_nodes();
        let dt = self.dt();
        let mut rev: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        let terminal: Vec<f64> = state
            .at(steps)
            .iter()
            .zip(&self.terminal_target)
            .map(|(y, t)| self.alpha2 * (y - t))
            .collect();
        let misfit_load = |n: usize| -> Vec<f64> {
            let d: Vec<f64> = state
                .at(n)
                .iter()
                .zip(&self.targets[n])
                .map(|(y, t)| self.alpha1 * (y - t))
                .collect();
            self.mass.mul_vec(&d)
        };
        // n = N
        let mut rhs: Vec<f64> = self.mass.mul_vec(&terminal).into_iter().map(|v| v / dt).collect();
        for (r, m) in rhs.iter_mut().zip(misfit_load(steps)) {
            *r += m;
        }
        let p_last = self.interior_solve(&rhs, None, steps)?;
        rev.push(terminal);
        rev.push(p_last);
        let mut adv = vec![0.0; n_nodes];
        for n in (1..steps).rev() {
            let next = rev.last().unwrap();
            let mut rhs = self.explicit_mass(next);
            let v = control.slice(n + 1);
            match self.options.adjoint {
                AdjointAdvection::Transpose => {
                    self.advect_transpose(v, next, &mut adv);
                    for (r, a) in rhs.iter_mut().zip(&adv) {
                        *r -= a;
                    }
                }
                AdjointAdvection::Direct => {
                    self.advect(v, next, &mut adv);
                    for (r, a) in rhs.iter_mut().zip(&adv) {
                        *r += a;
                    }
                }
            }
            for (r, m) in rhs.iter_mut().zip(misfit_load(n)) {
                *r += m;
            }
            let p = self.interior_solve(&rhs, None, n)?;
            rev.push(p);
        }
        rev.reverse();
        Ok(Trajectory {
            first: 1,
            fields: rev,
        })
    }

    /// Linearized state `z_0..z_N` for control `u` in direction `w`.
    pub fn solve_linearized(
        &self,
        control: &ControlTrajectory,
        direction: &ControlTrajectory,
        state: &Trajectory,
    ) -> Result<Trajectory> {
        self.check_control(control)?;
        self.check_control(direction)?;
        let n_nodes = self.num_nodes();
        let mut fields = Vec::with_capacity(self.grid.steps + 1);
        fields.push(vec![0.0; n_nodes]);
        let mut adv = vec![0.0; n_nodes];
        let mut coupling = vec![0.0; n_nodes];
        for n in 1..=self.grid.steps {
            let prev = &fields[n - 1];
            let mut rhs = self.explicit_mass(prev);
            self.advect(control.slice(n), prev, &mut adv);
            let y = match self.options.linearized {
                LinearizedCoupling::Lagged => state.at(n - 1),
                LinearizedCoupling::Current => state.at(n),
            };
            self.advect(direction.slice(n), y, &mut coupling);
            for ((r, a), c) in rhs.iter_mut().zip(&adv).zip(&coupling) {
                *r -= a + c;
            }
            let z = self.interior_solve(&rhs, None, n)?;
            fields.push(z);
        }
        Ok(Trajectory { first: 0, fields })
    }

    /// `x^T M y` on the fine mesh.
    pub fn mass_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        crate::fem::mass_inner(&self.mass, x, y)
    }

    /// `dt * sum_{n=1}^N |y_n - y_d^n|_M^2` and `|y_N - y_T|_M^2`.
    pub fn tracking_terms(&self, state: &Trajectory) -> (f64, f64) {
        let mut running = 0.0;
        for n in 1..=self.grid.steps {
            let d: Vec<f64> = state.at(n).iter().zip(&self.targets[n]).map(|(a, b)| a - b).collect();
            running += self.mass_inner(&d, &d);
        }
        let d: Vec<f64> = state
            .at(self.grid.steps)
            .iter()
            .zip(&self.terminal_target)
            .map(|(a, b)| a - b)
            .collect();
        (self.dt() * running, self.mass_inner(&d, &d))
    }

    /// Nodal load of the gradient integrand `v_n - p_n grad y_{n-1}` against velocity basis functions.
    pub fn gradient_load(&self, v: &VectorField, p: &[f64], y_prev: &[f64]) -> VectorField {
        let mut load = crate::fem::product_gradient_load(&self.mesh.fine, p, y_prev);
        let mx = self.mass.mul_vec(&v.x);
        let my = self.mass.mul_vec(&v.y);
        for (l, m) in load.x.iter_mut().zip(&mx) {
            *l = m - *l;
        }
        for (l, m) in load.y.iter_mut().zip(&my) {
            *l = m - *l;
        }
        load
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::interpolate;
    use crate::mesh::build_unit_square_mesh;
    use std::f64::consts::PI;

    fn heat_data(nu: f64, a0: f64) -> ProblemData {
        ProblemData {
            nu,
            a0,
            alpha1: 1.0,
            alpha2: 0.0,
            initial: SpaceField::Analytic(Arc::new(|p: Point| (PI * p[0]).sin() * (PI * p[1]).sin())),
            source: SpaceTimeField::Zero,
            boundary: SpaceTimeField::Zero,
            target: SpaceTimeField::Zero,
            terminal_target: SpaceField::Zero,
        }
    }

    #[test]
    fn time_grid_endpoints() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        assert_eq!(g.time(64), 1.0);
        assert_eq!(g.dt() * 64.0, 1.0);
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn validation_rejects_bad_coefficients() {
        let mut d = heat_data(1.0, 0.0);
        d.alpha1 = 0.0;
        assert!(d.validate().is_err());
        d.alpha1 = 1.0;
        d.nu = 0.0;
        assert!(d.validate().is_err());
    }

    #[test]
    fn zero_data_gives_zero_state() {
        let mesh = Arc::new(build_unit_square_mesh(3).unwrap());
        let mut d = heat_data(1.0, 1.0);
        d.initial = SpaceField::Zero;
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let disc = Discretization::new(mesh.clone(), grid, &d).unwrap();
        let n = mesh.fine.num_nodes();
        let v = ControlTrajectory::Field(vec![VectorField::constant(n, [1.0, 2.0]); 8]);
        let y = disc.solve_state(&v).unwrap();
        assert!(y.fields.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn heat_decay_benchmark() {
        let mesh = Arc::new(build_unit_square_mesh(5).unwrap());
        let grid = TimeGrid::new(0.1, 6).unwrap();
        let disc = Discretization::new(mesh.clone(), grid, &heat_data(1.0, 0.0)).unwrap();
        let y = disc.solve_state(&ControlTrajectory::zero_finite(6)).unwrap();
        let decay = (-2.0 * PI * PI * 0.1f64).exp();
        let err: Vec<f64> = y.at(6).iter().zip(&disc.initial).map(|(a, b)| a - decay * b).collect();
        let rel = disc.mass_inner(&err, &err).sqrt() / disc.mass_inner(&disc.initial, &disc.initial).sqrt();
        assert!(rel <= 5e-2, "relative error {rel}");
    }

    #[test]
    fn nonzero_boundary_data_is_pinned() {
        let mesh = Arc::new(build_unit_square_mesh(3).unwrap());
        let mut d = heat_data(1.0, 0.0);
        d.initial = SpaceField::Analytic(Arc::new(|p: Point| p[0] + 2.0 * p[1]));
        d.boundary = SpaceTimeField::Analytic(Arc::new(|p: Point, _t| p[0] + 2.0 * p[1]));
        let grid = TimeGrid::new(0.5, 4).unwrap();
        let disc = Discretization::new(mesh.clone(), grid, &d).unwrap();
        let y = disc.solve_state(&ControlTrajectory::zero_finite(4)).unwrap();
        // linear functions are discrete harmonic, so the steady solution persists
        let exact = interpolate(&mesh.fine, |p| p[0] + 2.0 * p[1]);
        for n in 0..=4 {
            for (a, b) in y.at(n).iter().zip(&exact) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn instability_is_reported() {
        let mesh = Arc::new(build_unit_square_mesh(3).unwrap());
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let disc = Discretization::new(mesh.clone(), grid, &heat_data(1.0, 0.0)).unwrap();
        let u = ControlTrajectory::FiniteDim(vec![[f64::NAN, 0.0], [0.0, 0.0]]);
        assert_eq!(disc.solve_state(&u).unwrap_err(), Error::Instability { step: 1 });
    }

    #[test]
    fn linearized_is_linear_in_direction() {
        let mesh = Arc::new(build_unit_square_mesh(3).unwrap());
        let grid = TimeGrid::new(0.5, 5).unwrap();
        let disc = Discretization::new(mesh.clone(), grid, &heat_data(1.0, 1.0)).unwrap();
        let u = ControlTrajectory::FiniteDim(vec![[0.3, -0.2]; 5]);
        let w = ControlTrajectory::FiniteDim((0..5).map(|k| [k as f64 * 0.1, 1.0]).collect());
        let y = disc.solve_state(&u).unwrap();
        let z1 = disc.solve_linearized(&u, &w, &y).unwrap();
        let z2 = disc.solve_linearized(&u, &w.scaled(2.0), &y).unwrap();
        for n in 0..=5 {
            for (a, b) in z1.at(n).iter().zip(z2.at(n)) {
                assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
        let z0 = disc.solve_linearized(&u, &u.zeros_like(), &y).unwrap();
        assert!(z0.fields.iter().flatten().all(|&x| x == 0.0));
    }
}
