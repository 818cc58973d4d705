//! CSV writers. Floats use Rust's shortest round-trip formatting, so files are
//! byte-identical across repeated runs of the same manifest.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use filterddp::{IterationRecord, Iterate, Mode, SolverReport};

/// Shortest round-trip representation, in exponent form outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub const LOG_HEADER: &str = "k,mode,mu,cost,theta,lagrangian,error,gamma,delta_w,m,l_type,filter_size,trials";

fn mode_name(m: &Mode) -> &'static str {
    match m {
        Mode::Equality => "equality",
        Mode::Barrier { .. } => "barrier",
    }
}

pub fn log_csv(records: &[IterationRecord]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in records {
        let gamma = r.gamma.map(num).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            mode_name(&r.mode),
            num(r.mode.mu()),
            num(r.cost),
            num(r.theta),
            num(r.lagrangian),
            num(r.error),
            gamma,
            num(r.delta_w),
            num(r.m),
            u8::from(r.l_type),
            r.filter_size,
            r.trials
        );
    }
    s
}

/// One row per stage: `t, x_*, u_*, phi_*, lambda_*, z_*`.
pub fn trajectory_csv(it: &Iterate) -> String {
    let groups: [(&str, &Vec<nalgebra::DVector<f64>>); 5] =
        [("x", &it.x), ("u", &it.u), ("phi", &it.phi), ("lambda", &it.lambda), ("z", &it.z)];
    let mut s = String::from("t");
    for (name, v) in &groups {
        let width = v.first().map_or(0, |c| c.len());
        for j in 0..width {
            let _ = write!(s, ",{name}{j}");
        }
    }
    s.push('\n');
    for t in 0..it.horizon() {
        let _ = write!(s, "{t}");
        for (_, v) in &groups {
            if let Some(col) = v.get(t) {
                for e in col.iter() {
                    let _ = write!(s, ",{}", num(*e));
                }
            }
        }
        s.push('\n');
    }
    s
}

pub const SUMMARY_HEADER: &str = "problem,seed,status,iterations,error,cost,theta";

/// Summary row; `None` report means the solver returned an error before iterating.
pub fn summary_row(problem: &str, seed: u64, report: Option<&SolverReport>, failure: &str) -> String {
    match report {
        Some(r) => {
            let last = r.records.last();
            format!(
                "{problem},{seed},{},{},{},{},{}",
                r.status.as_str(),
                r.iterations(),
                num(last.map_or(f64::NAN, |l| l.error)),
                num(last.map_or(f64::NAN, |l| l.cost)),
                num(r.iterate.theta)
            )
        }
        None => format!("{problem},{seed},{failure},0,,,"),
    }
}

pub fn run_paths(out: &Path, problem: &str, seed: u64) -> (PathBuf, PathBuf) {
    (out.join(format!("{problem}_{seed}_log.csv")), out.join(format!("{problem}_{seed}_traj.csv")))
}

pub fn write(path: &Path, contents: &str) -> io::Result<()> {
    std::fs::write(path, contents)
}
