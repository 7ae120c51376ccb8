//! The command-line binary and its configuration files.

use std::path::Path;
use std::process::Command;

use bilinear_control::config::{parse_run, parse_sweep, OUTPUT_DIR_ENV};
use bilinear_control::Error;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bilinear-control"));
    c.env_remove(OUTPUT_DIR_ENV);
    c
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn lines(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn run_writes_reports_and_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(
        tmp.path(),
        "run.cfg",
        &format!(
            "# small run\nexample = 1\nlevel = 4\ndt_power = 5\nalpha1 = 1e6\ntol = 1e-5\noutput_dir = {}\nsnapshot_times = [0.25, 0.5, 0.75]\n",
            out.display()
        ),
    );
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("level,h,dt,Iter,MaxIter_PCG,err_u_L2,err_y_L2Q,rel_misfit_y_yd"));
    for t in ["0.2500", "0.5000", "0.7500"] {
        for kind in ["state", "misfit"] {
            let f = out.join(format!("{kind}_t{t}.csv"));
            assert_eq!(lines(&f), 17 * 17 + 1, "{}", f.display());
        }
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let iters: usize = summary.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(report.lines().count(), iters + 2);
    assert!(summary.lines().nth(1).unwrap().ends_with(",converged"));
    assert_eq!(lines(&out.join("control.csv")), 32 + 1);
    // every number carries ten significant digits
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    for v in &row[5..9] {
        let mantissa = v.split('e').next().unwrap();
        assert_eq!(mantissa.trim_start_matches('-').len(), 11, "{v}");
    }
}

#[test]
fn field_run_writes_velocity_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(
        tmp.path(),
        "run.cfg",
        &format!(
            "example = 2\nlevel = 3\ndt_power = 4\nalpha1 = 1e6\ntol = 1e-4\nreference_level = 4\noutput_dir = {}\nsnapshot_times = [1.0]\n",
            out.display()
        ),
    );
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let f = out.join("control_t1.0000.csv");
    assert_eq!(lines(&f), 81 + 1);
    assert!(std::fs::read_to_string(f).unwrap().starts_with("x,y,u1,u2\n"));
}

#[test]
fn environment_overrides_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let other = tmp.path().join("elsewhere");
    let cfg = write(
        tmp.path(),
        "run.cfg",
        "example = 1\nlevel = 3\ndt_power = 4\nalpha1 = 1e6\ntol = 1e-5\noutput_dir = /nonexistent/never\n",
    );
    let o = bin().env(OUTPUT_DIR_ENV, &other).arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(other.join("summary.csv").exists());
}

#[test]
fn missing_tol_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.cfg",
        "example = 1\nlevel = 3\ndt_power = 4\nalpha1 = 1e6\noutput_dir = out\n",
    );
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tol"));
}

#[test]
fn unknown_and_malformed_lines_report_line_numbers() {
    let base = "example = 1\nlevel = 3\ndt_power = 4\nalpha1 = 1e6\ntol = 1e-5\noutput_dir = out\n";
    match parse_run(&format!("{base}tolerance = 1e-3\n")) {
        Err(Error::Config { line, message }) => {
            assert_eq!(line, 7);
            assert!(message.contains("tolerance"));
        }
        other => panic!("{other:?}"),
    }
    match parse_run(&format!("{base}garbage\n")) {
        Err(Error::Config { line, .. }) => assert_eq!(line, 7),
        other => panic!("{other:?}"),
    }
    match parse_run(&base.replace("1e6", "lots")) {
        Err(Error::Config { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn non_convergence_has_its_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.cfg",
        &format!(
            "example = 1\nlevel = 3\ndt_power = 4\nalpha1 = 1e6\ntol = 1e-30\nmax_outer = 2\noutput_dir = {}\n",
            tmp.path().join("o").display()
        ),
    );
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_of_one_level_has_no_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sw");
    let cfg = write(
        tmp.path(),
        "sweep.cfg",
        &format!("example = 1\nlevels = [4]\nalpha1 = 1e6\ntol = 1e-5\noutput_dir = {}\n", out.display()),
    );
    let o = bin().arg("sweep").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with("ratio_u,ratio_y,ratio_misfit"));
    assert!(rows[1].ends_with(",,,"));
    assert!(out.join("level4").join("summary.csv").exists());
}

#[test]
fn sweep_of_two_levels_reports_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sw");
    let cfg = write(
        tmp.path(),
        "sweep.cfg",
        &format!("example = 1\nlevels = 3, 4\nalpha1 = 1e6\ntol = 1e-5\noutput_dir = {}\n", out.display()),
    );
    let o = bin().arg("sweep").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let last: Vec<&str> = table.lines().nth(2).unwrap().split(',').collect();
    let ratio: f64 = last[last.len() - 3].parse().unwrap();
    assert!(ratio > 1.0, "{ratio}");
    let dt: f64 = last[2].parse().unwrap();
    assert_eq!(dt, 1.0 / 32.0);
}

#[test]
fn empty_level_list_is_rejected() {
    let text = "example = 1\nlevels = []\nalpha1 = 1e6\ntol = 1e-5\noutput_dir = out\n";
    assert!(matches!(parse_sweep(text), Err(Error::Config { line: 2, .. })));
}

#[test]
fn verify_passes() {
    let o = bin().arg("verify").output().unwrap();
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 7);
    assert!(!stdout.contains("FAIL"));
}
