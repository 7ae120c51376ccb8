//! Time-discrete control trajectories.

use crate::fem::{vector_mass_inner, VectorField};
use crate::sparse::SparseOperator;

/// One control value per time step `n = 1..=N`; entry `k` holds step `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlTrajectory {
    /// Nodal velocity fields on the fine mesh.
    Field(Vec<VectorField>),
    /// Spatially constant velocities, one 2-vector per step.
    FiniteDim(Vec<[f64; 2]>),
}

/// Borrowed view of a single time slice.
#[derive(Debug, Clone, Copy)]
pub enum ControlSlice<'a> {
    Field(&'a VectorField),
    Constant([f64; 2]),
}

impl ControlTrajectory {
    pub fn zero_field(steps: usize, nodes: usize) -> Self {
        ControlTrajectory::Field(vec![VectorField::zeros(nodes); steps])
    }

    pub fn zero_finite(steps: usize) -> Self {
        ControlTrajectory::FiniteDim(vec![[0.0; 2]; steps])
    }

    pub fn steps(&self) -> usize {
        match self {
            ControlTrajectory::Field(v) => v.len(),
            ControlTrajectory::FiniteDim(v) => v.len(),
        }
    }

    pub fn is_field(&self) -> bool {
        matches!(self, ControlTrajectory::Field(_))
    }

    /// Slice for time step `n` (1-based).
    pub fn slice(&self, n: usize) -> ControlSlice<'_> {
        match self {
            ControlTrajectory::Field(v) => ControlSlice::Field(&v[n - 1]),
            ControlTrajectory::FiniteDim(v) => ControlSlice::Constant(v[n - 1]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            ControlTrajectory::Field(v) => {
                Self::zero_field(v.len(), v.first().map_or(0, VectorField::len))
            }
            ControlTrajectory::FiniteDim(v) => Self::zero_finite(v.len()),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        match (self, other) {
            (ControlTrajectory::Field(a), ControlTrajectory::Field(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    x.axpy(alpha, y);
                }
            }
            (ControlTrajectory::FiniteDim(a), ControlTrajectory::FiniteDim(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    x[0] += alpha * y[0];
                    x[1] += alpha * y[1];
                }
            }
            _ => panic!("control modes differ"),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.zeros_like();
        out.axpy(alpha, self);
        out
    }

    /// Per-step spatial inner products `(a_n, b_n)` (mass-weighted for fields).
    pub fn step_inners(&self, other: &Self, mass: &SparseOperator) -> Vec<f64> {
        match (self, other) {
            (ControlTrajectory::Field(a), ControlTrajectory::Field(b)) => a
                .iter()
                .zip(b)
                .map(|(x, y)| vector_mass_inner(mass, x, y))
                .collect(),
            (ControlTrajectory::FiniteDim(a), ControlTrajectory::FiniteDim(b)) => a
                .iter()
                .zip(b)
                .map(|(x, y)| x[0] * y[0] + x[1] * y[1])
                .collect(),
            _ => panic!("control modes differ"),
        }
    }

    /// `(a, b)_dt = dt * sum_n (a_n, b_n)`, summed in step order.
    pub fn inner(&self, other: &Self, mass: &SparseOperator, dt: f64) -> f64 {
        dt * self.step_inners(other, mass).iter().sum::<f64>()
    }

    pub fn norm_sq(&self, mass: &SparseOperator, dt: f64) -> f64 {
        self.inner(self, mass, dt)
    }

    pub fn is_finite(&self) -> bool {
        match self {
            ControlTrajectory::Field(v) => v.iter().all(VectorField::is_finite),
            ControlTrajectory::FiniteDim(v) => v.iter().all(|x| x[0].is_finite() && x[1].is_finite()),
        }
    }
}
