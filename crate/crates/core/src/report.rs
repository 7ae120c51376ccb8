//! CSV output for runs and sweeps.
//!
//! Numbers are written in scientific notation with 10 significant digits.
//! Files that must be reproducible (`report.csv`, `summary.csv`, snapshots)
//! carry no timing; wall-clock data goes to `run_info.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::config::{RunConfig, SweepConfig};
use crate::control::ControlTrajectory;
use crate::error::Result;
use crate::optimizer::RunStatus;
use crate::problems::{Experiment, ExperimentResult};

/// `v` with 10 significant digits.
pub fn sci(v: f64) -> String {
    format!("{v:.9e}")
}

pub fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Converged => "converged",
        RunStatus::MaxOuter => "max_outer",
        RunStatus::Degenerate => "degenerate",
    }
}

/// One row per outer iterate.
pub fn iteration_csv(result: &ExperimentResult) -> String {
    let mut s = String::from("iteration,objective,grad_norm_sq,stepsize,max_iter_pcg\n");
    for r in &result.outcome.history {
        let step = r.stepsize.map(sci).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.iteration,
            sci(r.objective),
            sci(r.grad_norm_sq),
            step,
            r.max_inner
        );
    }
    s
}

pub const SUMMARY_HEADER: &str =
    "level,h,dt,Iter,MaxIter_PCG,err_u_L2,err_y_L2Q,rel_misfit_y_yd,objective,status";

pub fn summary_row(exp: &Experiment, result: &ExperimentResult) -> String {
    let d = &exp.problem.disc;
    let max_inner = if exp.problem.projection.is_some() {
        result.outcome.max_inner().to_string()
    } else {
        String::new()
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        exp.spec.level,
        sci(d.mesh.h()),
        sci(d.dt()),
        result.outcome.iterations,
        max_inner,
        sci(result.errors.control),
        sci(result.errors.state),
        sci(result.errors.relative_misfit),
        sci(result.outcome.history.last().map_or(f64::NAN, |r| r.objective)),
        status_name(result.outcome.status),
    )
}

/// Step index closest to time `t`.
pub fn nearest_step(exp: &Experiment, t: f64) -> usize {
    let n = exp.problem.disc.grid.steps;
    ((t * n as f64).round() as usize).min(n)
}

fn nodal_csv(exp: &Experiment, values: &[f64]) -> String {
    let mut s = String::from("x,y,value\n");
    for (p, v) in exp.problem.disc.mesh.fine.nodes.iter().zip(values) {
        let _ = writeln!(s, "{},{},{}", sci(p[0]), sci(p[1]), sci(*v));
    }
    s
}

fn time_tag(t: f64) -> String {
    format!("{t:.4}")
}

/// Writes all run artifacts into `dir`.
pub fn write_run(
    dir: &Path,
    exp: &Experiment,
    result: &ExperimentResult,
    snapshot_times: &[f64],
    elapsed: Duration,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), iteration_csv(result))?;
    fs::write(
        dir.join("summary.csv"),
        format!("{SUMMARY_HEADER}\n{}\n", summary_row(exp, result)),
    )?;
    let d = &exp.problem.disc;
    let state = &result.outcome.state;
    for &t in snapshot_times {
        let n = nearest_step(exp, t);
        let tag = time_tag(t);
        let y = state.at(n);
        fs::write(dir.join(format!("state_t{tag}.csv")), nodal_csv(exp, y))?;
        let misfit: Vec<f64> = y.iter().zip(&d.targets[n]).map(|(a, b)| a - b).collect();
        fs::write(dir.join(format!("misfit_t{tag}.csv")), nodal_csv(exp, &misfit))?;
        if let ControlTrajectory::Field(u) = &result.outcome.control {
            let k = n.max(1) - 1;
            let mut s = String::from("x,y,u1,u2\n");
            for (i, p) in d.mesh.fine.nodes.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    sci(p[0]),
                    sci(p[1]),
                    sci(u[k].x[i]),
                    sci(u[k].y[i])
                );
            }
            fs::write(dir.join(format!("control_t{tag}.csv")), s)?;
        }
    }
    if let (ControlTrajectory::FiniteDim(u), ControlTrajectory::FiniteDim(ex)) =
        (&result.outcome.control, &exp.exact_control)
    {
        let mut s = String::from("t,u1,u2,u1_exact,u2_exact\n");
        for (k, (a, b)) in u.iter().zip(ex).enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                sci(d.grid.time(k + 1)),
                sci(a[0]),
                sci(a[1]),
                sci(b[0]),
                sci(b[1])
            );
        }
        fs::write(dir.join("control.csv"), s)?;
    }
    let info = format!(
        "example = {}\nlevel = {}\ndt_power = {}\nalpha1 = {}\ntol = {}\ntol_pcg = {}\nthreads = {}\nreference_level = {}\nwall_seconds = {:.3}\n",
        exp.spec.example.id(),
        exp.spec.level,
        exp.spec.dt_power,
        exp.spec.alpha1,
        exp.spec.tol,
        exp.spec.tol_pcg,
        exp.problem.threads(),
        exp.reference
            .as_ref()
            .map_or("none".to_string(), |r| r.reference_level.to_string()),
        elapsed.as_secs_f64()
    );
    fs::write(dir.join("run_info.txt"), info)?;
    Ok(())
}

/// Combined sweep table with ratios between consecutive rows.
pub fn sweep_csv(rows: &[(&Experiment, &ExperimentResult)]) -> String {
    let mut s = format!("{SUMMARY_HEADER},ratio_u,ratio_y,ratio_misfit\n");
    let mut prev: Option<&ExperimentResult> = None;
    for (exp, res) in rows {
        let ratios = match prev {
            Some(p) => format!(
                "{},{},{}",
                sci(p.errors.control / res.errors.control),
                sci(p.errors.state / res.errors.state),
                sci(p.errors.relative_misfit / res.errors.relative_misfit)
            ),
            None => ",,".to_string(),
        };
        let _ = writeln!(s, "{},{}", summary_row(exp, res), ratios);
        prev = Some(res);
    }
    s
}

/// Runs one configured experiment and writes its files.
pub fn execute_run(cfg: &RunConfig) -> Result<(Experiment, ExperimentResult)> {
    let start = Instant::now();
    let exp = Experiment::new(cfg.spec.clone())?;
    let res = exp.run()?;
    write_run(&cfg.output_dir, &exp, &res, &cfg.snapshot_times, start.elapsed())?;
    Ok((exp, res))
}

/// Runs every level of a sweep. Each level writes into `level<l>/`; the combined
/// table goes to `sweep_summary.csv`.
pub fn execute_sweep(cfg: &SweepConfig) -> Result<Vec<(Experiment, ExperimentResult)>> {
    let mut runs = Vec::with_capacity(cfg.levels.len());
    for &level in &cfg.levels {
        let start = Instant::now();
        let exp = Experiment::new(cfg.spec_for(level))?;
        let res = exp.run()?;
        let dir = cfg.output_dir.join(format!("level{level}"));
        write_run(&dir, &exp, &res, &cfg.snapshot_times, start.elapsed())?;
        runs.push((exp, res));
    }
    let rows: Vec<(&Experiment, &ExperimentResult)> = runs.iter().map(|(e, r)| (e, r)).collect();
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("sweep_summary.csv"), sweep_csv(&rows))?;
    Ok(runs)
}
