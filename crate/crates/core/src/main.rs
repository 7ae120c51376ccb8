use std::path::PathBuf;
use std::process::ExitCode;

use bilinear_control::config::{parse_run, parse_sweep};
use bilinear_control::optimizer::RunStatus;
use bilinear_control::report::{execute_run, execute_sweep, status_name, SUMMARY_HEADER, summary_row};
use bilinear_control::{verify, Error};
use clap::{Parser, Subcommand};

/// Optimal velocity control of advection-reaction-diffusion by nested CG.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a key = value file.
    Run { config: PathBuf },
    /// Run a list of levels with dt = h/2 and tabulate convergence ratios.
    Sweep { config: PathBuf },
    /// Run the small-mesh self-checks.
    Verify,
}

const EXIT_NOT_CONVERGED: u8 = 2;

fn status_code(s: RunStatus) -> u8 {
    match s {
        RunStatus::Converged => 0,
        RunStatus::MaxOuter | RunStatus::Degenerate => EXIT_NOT_CONVERGED,
    }
}

fn read(path: &PathBuf) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Run { config } => {
            let cfg = parse_run(&read(&config)?)?;
            let (exp, res) = execute_run(&cfg)?;
            println!("{SUMMARY_HEADER}");
            println!("{}", summary_row(&exp, &res));
            eprintln!(
                "{} after {} iterations; output in {}",
                status_name(res.outcome.status),
                res.outcome.iterations,
                cfg.output_dir.display()
            );
            Ok(status_code(res.outcome.status))
        }
        Command::Sweep { config } => {
            let cfg = parse_sweep(&read(&config)?)?;
            let runs = execute_sweep(&cfg)?;
            println!("{SUMMARY_HEADER}");
            let mut code = 0;
            for (exp, res) in &runs {
                println!("{}", summary_row(exp, res));
                code = code.max(status_code(res.outcome.status));
            }
            eprintln!("output in {}", cfg.output_dir.display());
            Ok(code)
        }
        Command::Verify => {
            let checks = verify::run_all()?;
            let mut failed = 0;
            for c in &checks {
                println!("{c}");
                if !c.passed() {
                    failed += 1;
                }
            }
            println!("{} of {} checks passed", checks.len() - failed, checks.len());
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
