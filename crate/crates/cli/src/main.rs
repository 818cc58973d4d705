//! `filterddp` — run benchmark problems through the filter DDP solver.
//!
//! Exit status: 0 when every instance converged (or every check passed),
//! 1 when any did not, 2 for an invalid manifest.

mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use filterddp::problems::{instantiate, oracle::stacked_kkt_oracle, random_derivative_check, randomize, trajectory_gap};
use filterddp::problems::{BenchmarkSpec, CorruptedDynamics};
use filterddp::{solve, OcpModel, SolverReport};

use manifest::{RawArgs, RunManifest};

const DERIVATIVE_TOL: f64 = 1e-5;
const ORACLE_TOL: f64 = 1e-8;
const DERIVATIVE_POINTS: usize = 5;

#[derive(Parser)]
#[command(name = "filterddp", version, about = "Line-search filter DDP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance or a seeded batch and write logs and trajectories.
    Solve(Common),
    /// Verify model derivatives, and the oracle agreement on linear-quadratic problems.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// Problem name (eqlq, pendulum, pendulum_bounded, cartpole, cartpole_friction, acrobot, acrobot_contact).
    #[arg(long)]
    problem: Option<String>,
    /// Base seed; batch members use seed, seed+1, ….
    #[arg(long)]
    seed: Option<u64>,
    /// Number of randomized instances.
    #[arg(long)]
    batch: Option<usize>,
    /// Output directory.
    #[arg(long, env = "FILTERDDP_OUT")]
    out: Option<PathBuf>,
    /// Override a solver, regularization or problem parameter (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Flat key=value file; flags and --set take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl Common {
    fn manifest(&self) -> Result<RunManifest, manifest::ManifestError> {
        let raw = RawArgs {
            problem: self.problem.clone(),
            seed: self.seed,
            batch: self.batch,
            out: self.out.clone(),
            config: self.config.clone(),
            sets: self.sets.clone(),
        };
        RunManifest::build(&raw, &PathBuf::from("runs"))
    }
}

struct RunResult {
    seed: u64,
    report: Result<SolverReport, String>,
}

fn run_one(spec: &BenchmarkSpec, m: &RunManifest) -> RunResult {
    let report = instantiate(spec)
        .and_then(|inst| solve(inst.model.as_ref(), &inst.u_init, &m.config))
        .map_err(|e| e.to_string());
    RunResult { seed: spec.seed, report }
}

/// Solves all instances, spreading them over the available cores.
fn run_batch(specs: &[BenchmarkSpec], m: &RunManifest) -> Vec<RunResult> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(specs.len()).max(1);
    let chunk = specs.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = specs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|spec| run_one(spec, m)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("solver thread panicked")).collect()
    })
}

fn cmd_solve(m: &RunManifest) -> Result<bool, String> {
    std::fs::create_dir_all(&m.out).map_err(|e| format!("cannot create {}: {e}", m.out.display()))?;
    let specs = randomize(&m.spec, m.batch);
    let results = run_batch(&specs, m);
    let mut summary = String::from(output::SUMMARY_HEADER);
    summary.push('\n');
    let mut all_ok = true;
    for r in &results {
        match &r.report {
            Ok(rep) => {
                let (log, traj) = output::run_paths(&m.out, &m.problem, r.seed);
                output::write(&log, &output::log_csv(&rep.records)).map_err(|e| format!("{}: {e}", log.display()))?;
                output::write(&traj, &output::trajectory_csv(&rep.iterate))
                    .map_err(|e| format!("{}: {e}", traj.display()))?;
                let err = rep.records.last().map_or(f64::NAN, |l| l.error);
                println!(
                    "{} seed={} status={} iterations={} error={:.3e} time={:.3?}",
                    m.problem,
                    r.seed,
                    rep.status.as_str(),
                    rep.iterations(),
                    err,
                    rep.wall_time
                );
                all_ok &= rep.status == filterddp::Status::Converged;
                summary.push_str(&output::summary_row(&m.problem, r.seed, Some(rep), ""));
            }
            Err(e) => {
                println!("{} seed={} error: {e}", m.problem, r.seed);
                all_ok = false;
                summary.push_str(&output::summary_row(&m.problem, r.seed, None, "error"));
            }
        }
        summary.push('\n');
    }
    let path = m.out.join("summary.csv");
    output::write(&path, &summary).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(all_ok)
}

fn check_one(spec: &BenchmarkSpec, m: &RunManifest) -> Result<bool, String> {
    let inst = instantiate(spec).map_err(|e| e.to_string())?;
    let model: Box<dyn OcpModel> = match m.corrupt_fu {
        Some(off) => Box::new(CorruptedDynamics::boxed(inst.model, off)),
        None => inst.model,
    };
    let rep = random_derivative_check(model.as_ref(), spec.seed, DERIVATIVE_POINTS).map_err(|e| e.to_string())?;
    let deriv_ok = rep.max() <= DERIVATIVE_TOL;
    println!(
        "{} seed={} derivatives: max error {:.3e} (tol {DERIVATIVE_TOL:e}) {}",
        m.problem,
        spec.seed,
        rep.max(),
        if deriv_ok { "ok" } else { "FAIL" }
    );
    let mut ok = deriv_ok;
    if inst.linear_quadratic {
        let oracle = stacked_kkt_oracle(model.as_ref()).map_err(|e| e.to_string())?;
        let sol = solve(model.as_ref(), &inst.u_init, &m.config).map_err(|e| e.to_string())?;
        let gap = trajectory_gap(&sol.iterate, &oracle);
        let gap_ok = gap <= ORACLE_TOL && sol.status == filterddp::Status::Converged;
        println!(
            "{} seed={} oracle gap: {gap:.3e} (tol {ORACLE_TOL:e}) status={} {}",
            m.problem,
            spec.seed,
            sol.status.as_str(),
            if gap_ok { "ok" } else { "FAIL" }
        );
        ok &= gap_ok;
    }
    Ok(ok)
}

fn cmd_check(m: &RunManifest) -> Result<bool, String> {
    let mut all_ok = true;
    for spec in randomize(&m.spec, m.batch) {
        all_ok &= check_one(&spec, m)?;
    }
    Ok(all_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, solve_cmd) = match &cli.command {
        Command::Solve(c) => (c, true),
        Command::Check(c) => (c, false),
    };
    let m = match common.manifest() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = if solve_cmd { cmd_solve(&m) } else { cmd_check(&m) };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
