use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nsbang::bench::config::Config;
use nsbang::bench::convergence::{run_convergence, run_ns_convergence, Mode};
use nsbang::bench::invariants::{invariant_problem, run_all};
use nsbang::bench::io::{export_csv, export_vtk, format_table};
use nsbang::bench::manufactured::{make_ns_benchmark, make_ocp_benchmark};
use nsbang::estimators::check_assumptions;
use nsbang::ocp::{solve_ocp, OcpProblem};
use nsbang::spaces::build_space;
use nsbang::Error;

#[derive(Parser)]
#[command(name = "nsbang", version, about = "Bang-bang control of stationary Navier-Stokes flow with Taylor-Hood elements")]
struct Cli {
    /// JSON configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Velocity/pressure convergence on the manufactured flow.
    NsConverge,
    /// Control, state and adjoint convergence on the manufactured control problem.
    OcpConverge,
    /// Adaptive ladder on the manufactured control problem.
    Adapt,
    /// Randomized consistency checks of the discretization.
    CheckInvariants,
    /// Smallness conditions on the computed optimal state.
    ReportAssumptions,
}

fn run(cli: Cli) -> Result<bool, Error> {
    let config = match &cli.config {
        Some(p) => Config::from_path(p)?,
        None => Config::default(),
    };
    let bounds = config.control_bounds()?;
    match cli.command {
        Command::NsConverge => {
            let bench = make_ns_benchmark(config.nu);
            let run = run_ns_convergence(
                &bench,
                config.initial_mesh(),
                config.ladder.levels,
                config.newton(),
                config.bound_params(),
            )?;
            print!("{}", format_table(&run.records));
            for r in &run.records {
                println!("level {} pressure L2 error {:.4e}", r.level, r.err_p_l2);
            }
            export_csv(&run.records, &config.output.csv)?;
            if let Some(vtk) = &config.output.vtk {
                export_vtk(&[("state", &run.state)], vtk)?;
            }
        }
        Command::OcpConverge | Command::Adapt => {
            let bench = make_ocp_benchmark(config.nu, bounds);
            let mut study = config.study();
            if matches!(cli.command, Command::Adapt) {
                study.mode = Mode::Adaptive;
            }
            let run = run_convergence(&bench, config.initial_mesh(), study)?;
            print!("{}", format_table(&run.records));
            export_csv(&run.records, &config.output.csv)?;
            if let Some(vtk) = &config.output.vtk {
                let last = run.finest().last();
                export_vtk(&[("state", &last.state), ("adjoint", &last.adjoint)], vtk)?;
            }
        }
        Command::CheckInvariants => {
            let space = build_space(config.initial_mesh());
            let problem = invariant_problem(space, config.nu, bounds, config.newton());
            let checks = run_all(&problem, 2024)?;
            let mut ok = true;
            for c in &checks {
                let verdict = if c.passed() { "pass" } else { "FAIL" };
                println!("{verdict:4} {:<42} {:.3e} (tol {:.0e})", c.name, c.value, c.tol);
                ok &= c.passed();
            }
            return Ok(ok);
        }
        Command::ReportAssumptions => {
            let bench = make_ocp_benchmark(config.nu, bounds);
            let space = build_space(config.initial_mesh());
            let problem = OcpProblem::new(space, bench.problem_data(), config.newton());
            let study = config.study();
            let run = solve_ocp(&problem, study.ocp)?;
            let r = check_assumptions(&run.last().state, config.nu, config.estimator.c_b)?;
            println!("|grad y|_L2        = {:.6e}", r.grad_l2);
            println!("|grad y|_L12/5     = {:.6e}", r.grad_l12_5);
            println!("nu                 = {:.6e}", r.nu);
            println!("C_b (heuristic)    = {:.6e}", r.c_b);
            println!("|grad y| < nu/C_b  : {}", r.state_condition);
            println!("2|grad y| < nu/C_b : {}", r.adjoint_condition);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
