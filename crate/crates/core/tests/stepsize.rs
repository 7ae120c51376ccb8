//! The closed-form step size against the quadratic model evaluated from its definition.

use bilinear_control::control::ControlTrajectory;
use bilinear_control::optimizer::ControlProblem;
use bilinear_control::pde::Trajectory;
use bilinear_control::problems::{Example, Experiment, ExperimentSpec};
use bilinear_control::verify::{random_finite_control, rng};

/// `1/2 |u - rho w|^2 + alpha1/2 dt sum |y_n - rho z_n - yd_n|^2 + alpha2/2 |y_N - rho z_N - yT|^2`
fn model(p: &ControlProblem, u: &ControlTrajectory, w: &ControlTrajectory, y: &Trajectory, z: &Trajectory, rho: f64) -> f64 {
    let mut v = u.clone();
    v.axpy(-rho, w);
    let lin = Trajectory {
        first: 0,
        fields: (0..=p.disc.grid.steps)
            .map(|n| y.at(n).iter().zip(z.at(n)).map(|(a, b)| a - rho * b).collect())
            .collect(),
    };
    p.objective_with_state(&v, &lin)
}

fn setup() -> (Experiment, ControlTrajectory, Trajectory) {
    let mut spec = ExperimentSpec::new(Example::One, 4);
    spec.threads = 1;
    let exp = Experiment::new(spec).unwrap();
    let u = random_finite_control(&mut rng(20), exp.problem.disc.grid.steps);
    let y = exp.problem.disc.solve_state(&u).unwrap();
    (exp, u, y)
}

#[test]
fn stepsize_minimizes_quadratic_model() {
    let (exp, u, y) = setup();
    let p = &exp.problem;
    let g = p.gradient(&u, &y, None).unwrap().g;
    let z = p.disc.solve_linearized(&u, &g, &y).unwrap();
    let rho = p.stepsize(&g, &g, &z).unwrap();
    assert!(rho > 0.0);
    let q = model(p, &u, &g, &y, &z, rho);
    for delta in [1e-3, 1e-3 * rho] {
        assert!(q <= model(p, &u, &g, &y, &z, rho + delta));
        assert!(q <= model(p, &u, &g, &y, &z, rho - delta));
    }
    // derivative of the model at rho is zero
    let h = 1e-4 * rho;
    let slope = (model(p, &u, &g, &y, &z, rho + h) - model(p, &u, &g, &y, &z, rho - h)) / (2.0 * h);
    let scale = (model(p, &u, &g, &y, &z, 0.0) - q) / rho;
    assert!(slope.abs() <= 1e-5 * scale, "{slope:e} vs {scale:e}");
}

#[test]
fn stepsize_scales_inversely_with_direction() {
    let (exp, u, y) = setup();
    let p = &exp.problem;
    let g = p.gradient(&u, &y, None).unwrap().g;
    let w = random_finite_control(&mut rng(21), p.disc.grid.steps);
    let z = p.disc.solve_linearized(&u, &w, &y).unwrap();
    let rho = p.stepsize(&g, &w, &z).unwrap();
    for c in [0.5, 3.0, 1e3] {
        let wc = w.scaled(c);
        let zc = p.disc.solve_linearized(&u, &wc, &y).unwrap();
        let rc = p.stepsize(&g, &wc, &zc).unwrap();
        assert!((rc * c - rho).abs() <= 1e-12 * rho.abs(), "c = {c}");
    }
}

#[test]
fn zero_direction_is_degenerate() {
    let (exp, u, y) = setup();
    let p = &exp.problem;
    let w = u.zeros_like();
    let z = p.disc.solve_linearized(&u, &w, &y).unwrap();
    assert!(p.stepsize(&w, &w, &z).is_err());
}
