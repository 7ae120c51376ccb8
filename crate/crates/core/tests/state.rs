//! State solver against a dense matrix exponential, and energy decay.

use std::f64::consts::PI;
use std::sync::Arc;

use bilinear_control::control::ControlTrajectory;
use bilinear_control::mesh::{build_unit_square_mesh, Point};
use bilinear_control::pde::{Discretization, ProblemData, SpaceField, SpaceTimeField, TimeGrid};
use bilinear_control::verify::{heat_check, stability_norms};
use nalgebra::{DMatrix, DVector};

fn data(a0: f64) -> ProblemData {
    ProblemData {
        nu: 1.0,
        a0,
        alpha1: 1.0,
        alpha2: 0.0,
        initial: SpaceField::Analytic(Arc::new(|p: Point| {
            (PI * p[0]).sin() * (PI * p[1]).sin() + 0.5 * (2.0 * PI * p[0]).sin() * p[1] * (1.0 - p[1])
        })),
        source: SpaceTimeField::Zero,
        boundary: SpaceTimeField::Zero,
        target: SpaceTimeField::Zero,
        terminal_target: SpaceField::Zero,
    }
}

fn dense(op: &bilinear_control::sparse::SparseOperator, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| op.get(idx[i], idx[j]))
}

#[test]
fn zero_control_matches_matrix_exponential() {
    let mesh = Arc::new(build_unit_square_mesh(3).unwrap());
    let t_final = 0.1;
    let steps = 2000;
    let disc = Discretization::new(mesh.clone(), TimeGrid::new(t_final, steps).unwrap(), &data(1.0)).unwrap();
    let y = disc.solve_state(&ControlTrajectory::zero_finite(steps)).unwrap();

    // M y' + (K + a0 M) y = 0 on interior nodes: y(T) = L^-T Q exp(-(L + a0) T) Q^T L^T y0
    let idx = &disc.interior.dof_to_node;
    let m = dense(&disc.mass, idx);
    let k = dense(&disc.stiffness, idx);
    let chol = m.clone().cholesky().unwrap();
    let l = chol.l();
    let linv = l.clone().try_inverse().unwrap();
    let s = &linv * &k * linv.transpose();
    let eig = s.symmetric_eigen();
    let y0 = DVector::from_iterator(idx.len(), idx.iter().map(|&i| disc.initial[i]));
    let c = eig.eigenvectors.transpose() * (l.transpose() * &y0);
    let decayed = DVector::from_iterator(
        c.len(),
        c.iter().zip(eig.eigenvalues.iter()).map(|(ci, lam)| ci * (-(lam + 1.0) * t_final).exp()),
    );
    let exact = linv.transpose() * (&eig.eigenvectors * decayed);

    let diff = DVector::from_iterator(idx.len(), idx.iter().enumerate().map(|(a, &i)| y.at(steps)[i] - exact[a]));
    let err = (diff.transpose() * &m * &diff)[(0, 0)].sqrt();
    let norm0 = (y0.transpose() * &m * &y0)[(0, 0)].sqrt();
    assert!(err <= 1e-3 * norm0, "{err:e} vs {norm0:e}");
}

#[test]
fn heat_benchmark_within_tolerance() {
    let c = heat_check().unwrap();
    assert!(c.passed(), "{c}");
}

#[test]
fn energy_non_increasing_without_source() {
    let norms = stability_norms().unwrap();
    assert!(norms[0] > 0.0);
    for (n, w) in norms.windows(2).enumerate() {
        assert!(w[1] <= w[0], "step {}: {} > {}", n + 1, w[1], w[0]);
    }
}
