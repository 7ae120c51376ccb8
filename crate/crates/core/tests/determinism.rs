//! Thread count must not change any computed bit.

use std::sync::Arc;

use bilinear_control::config::parse_run;
use bilinear_control::mesh::build_unit_square_mesh;
use bilinear_control::optimizer::ControlProblem;
use bilinear_control::pde::{Discretization, TimeGrid};
use bilinear_control::problems::{example2_data, example2_reference};
use bilinear_control::projection::{ProjectionSettings, ProjectionWorkspace};
use bilinear_control::report::execute_run;
use bilinear_control::verify::{random_field_control, rng};

fn problem(threads: usize) -> ControlProblem {
    let mesh = Arc::new(build_unit_square_mesh(4).unwrap());
    let grid = TimeGrid::new(1.0, 32).unwrap();
    let reference = example2_reference(&mesh, grid, 5, ProjectionSettings::default(), threads).unwrap();
    let data = example2_data(&mesh, grid, &reference, 1e6);
    let disc = Discretization::new(mesh.clone(), grid, &data).unwrap();
    let ws = ProjectionWorkspace::new(&mesh, ProjectionSettings::default()).unwrap();
    ControlProblem::new(disc, Some(ws), threads).unwrap()
}

#[test]
fn parallel_gradient_is_bitwise_sequential() {
    let seq = problem(1);
    let par = problem(4);
    assert_eq!(par.threads(), 4);
    let u = random_field_control(&mut rng(30), 32, seq.disc.num_nodes());
    let ys = seq.disc.solve_state(&u).unwrap();
    let yp = par.disc.solve_state(&u).unwrap();
    assert_eq!(ys, yp);
    let gs = seq.gradient(&u, &ys, None).unwrap();
    let gp = par.gradient(&u, &yp, None).unwrap();
    assert_eq!(gs.g, gp.g);
    assert_eq!(gs.multipliers, gp.multipliers);
    assert_eq!(gs.max_inner, gp.max_inner);
}

fn summary(dir: &std::path::Path, threads: usize) -> Vec<u8> {
    let text = format!(
        "example = 2\nlevel = 4\ndt_power = 5\nalpha1 = 1e6\ntol = 1e-6\nreference_level = 5\nthreads = {threads}\noutput_dir = {}\nsnapshot_times = [0.5]\n",
        dir.display()
    );
    let cfg = parse_run(&text).unwrap();
    execute_run(&cfg).unwrap();
    std::fs::read(dir.join("summary.csv")).unwrap()
}

#[test]
fn repeated_runs_write_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let a = summary(&tmp.path().join("a"), 1);
    let b = summary(&tmp.path().join("b"), 1);
    let c = summary(&tmp.path().join("c"), 4);
    assert_eq!(a, b);
    assert_eq!(a, c);
    for f in ["report.csv", "state_t0.5000.csv", "control_t0.5000.csv"] {
        assert_eq!(
            std::fs::read(tmp.path().join("a").join(f)).unwrap(),
            std::fs::read(tmp.path().join("c").join(f)).unwrap(),
            "{f}"
        );
    }
}
