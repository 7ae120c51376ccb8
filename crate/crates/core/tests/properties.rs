//! Randomized invariants.

use std::sync::Arc;

use bilinear_control::config::parse_run;
use bilinear_control::fem::{advection_apply, interpolate, mass_matrix, stiffness_matrix, VectorField};
use bilinear_control::mesh::build_unit_square_mesh;
use bilinear_control::pde::{Discretization, TimeGrid};
use bilinear_control::problems::restrict_nodal;
use bilinear_control::projection::{ProjectionSettings, ProjectionWorkspace};
use bilinear_control::report::sci;
use bilinear_control::verify::{
    duality_sides, random_field, random_field_control, random_finite_control, random_problem_data, rng,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mass_sums_to_area_and_stiffness_kills_constants(level in 2u32..7) {
        let mesh = build_unit_square_mesh(level).unwrap();
        let n = mesh.fine.num_nodes();
        let ones = vec![1.0; n];
        let total: f64 = mass_matrix(&mesh.fine).mul_vec(&ones).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let k1 = stiffness_matrix(&mesh.fine).mul_vec(&ones);
        prop_assert!(k1.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn advection_of_linear_by_constant_is_mass_times_derivative(
        a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
        v1 in -2.0..2.0f64, v2 in -2.0..2.0f64, level in 2u32..5,
    ) {
        let mesh = build_unit_square_mesh(level).unwrap();
        let n = mesh.fine.num_nodes();
        let y = interpolate(&mesh.fine, |p| a + b * p[0] + c * p[1]);
        let v = VectorField::constant(n, [v1, v2]);
        let mut out = vec![0.0; n];
        advection_apply(&mesh.fine, &v, &y, &mut out);
        let expect = mass_matrix(&mesh.fine).mul_vec(&vec![v1 * b + v2 * c; n]);
        for (o, e) in out.iter().zip(&expect) {
            prop_assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_linear_and_divergence_free(seed in any::<u64>(), s in -5.0..5.0f64) {
        let mesh = build_unit_square_mesh(3).unwrap();
        let ws = ProjectionWorkspace::new(&mesh, ProjectionSettings { tol: 1e-20, ..Default::default() }).unwrap();
        let mut r = rng(seed);
        let a = random_field(&mut r, mesh.fine.num_nodes());
        let pa = ws.project(&a, None).unwrap().g;
        let psa = ws.project(&a.scaled(s), None).unwrap().g;
        let mut d = pa.scaled(s);
        d.axpy(-1.0, &psa);
        prop_assert!(ws.mass_norm(&d) <= 1e-9 * (1.0 + ws.mass_norm(&psa)));
        let div = ws.divergence_residual(&pa);
        prop_assert!(div.iter().all(|x| x.abs() <= 1e-10 * (1.0 + ws.mass_norm(&pa)) / mesh.h()));
    }

    #[test]
    fn duality_for_random_data(seed in any::<u64>(), field in any::<bool>()) {
        let mesh = Arc::new(build_unit_square_mesh(3).unwrap());
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let mut r = rng(seed);
        let data = random_problem_data(&mut r, &mesh, 4);
        let disc = Discretization::new(mesh.clone(), grid, &data).unwrap();
        let n = mesh.fine.num_nodes();
        let (u, w) = if field {
            (random_field_control(&mut r, 4, n), random_field_control(&mut r, 4, n))
        } else {
            (random_finite_control(&mut r, 4), random_finite_control(&mut r, 4))
        };
        let (lhs, rhs) = duality_sides(&disc, &u, &w).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn scientific_output_keeps_ten_digits(x in prop::num::f64::NORMAL) {
        let back: f64 = sci(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-10 * x.abs());
    }

    #[test]
    fn restriction_commutes_with_interpolation(from in 3u32..6, down in 1u32..3) {
        let to = from.saturating_sub(down).max(2);
        let fine = build_unit_square_mesh(from).unwrap();
        let coarse = build_unit_square_mesh(to).unwrap();
        let f = |p: [f64; 2]| (3.0 * p[0]).sin() + p[1] * p[1];
        let r = restrict_nodal(&interpolate(&fine.fine, f), &fine, &coarse).unwrap();
        prop_assert_eq!(r, interpolate(&coarse.fine, f));
    }

    #[test]
    fn config_values_round_trip(
        level in 2u32..9, dt in 0u32..12, alpha in 1e-2..1e9f64, tol in 1e-12..1e-1f64, outer in 1usize..5000,
    ) {
        let text = format!(
            "example = 2\nlevel = {level}\ndt_power = {dt}\nalpha1 = {alpha:e}\ntol = {tol:e}\nmax_outer = {outer}\noutput_dir = x\n"
        );
        let cfg = parse_run(&text).unwrap();
        prop_assert_eq!(cfg.spec.level, level);
        prop_assert_eq!(cfg.spec.dt_power, dt);
        prop_assert_eq!(cfg.spec.alpha1, alpha);
        prop_assert_eq!(cfg.spec.tol, tol);
        prop_assert_eq!(cfg.spec.max_outer, outer);
    }
}
