//! Outer iteration: backward pass, convergence test, line search, filter update.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backward::{backward_pass, RegParams, RegState};
use crate::barrier::{advance_subproblem, complementarity_error, BarrierState};
use crate::error::{Error, Result};
use crate::filter::{augment_filter, line_search, rollout, Filter};
use crate::model::{control_mask, has_bounds, kkt_residuals, Iterate, Mode, OcpModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub eps_tol: f64,
    pub max_iters: usize,
    pub gamma_theta: f64,
    pub gamma_l: f64,
    pub delta: f64,
    pub s_theta: f64,
    pub s_l: f64,
    pub eta_l: f64,
    pub gamma_min: f64,
    /// `θ_max = theta_max_factor · max(1, θ(w₀))`
    pub theta_max_factor: f64,
    /// `θ_min = theta_min_factor · max(1, θ(w₀))`
    pub theta_min_factor: f64,
    pub mu_init: f64,
    pub kappa_eps: f64,
    pub kappa_mu: f64,
    pub theta_mu: f64,
    pub tau_min: f64,
    pub reg: RegParams,
    /// Drop second derivatives of the dynamics from the Q-function Hessians.
    pub gauss_newton: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_tol: 1e-7,
            max_iters: 1000,
            gamma_theta: 1e-5,
            gamma_l: 1e-5,
            delta: 1.0,
            s_theta: 1.1,
            s_l: 2.3,
            eta_l: 1e-4,
            gamma_min: 1e-9,
            theta_max_factor: 1e4,
            theta_min_factor: 1e-4,
            mu_init: 1.0,
            kappa_eps: 10.0,
            kappa_mu: 0.2,
            theta_mu: 1.2,
            tau_min: 0.99,
            reg: RegParams::default(),
            gauss_newton: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        let checks: [(bool, &str); 12] = [
            (self.eps_tol > 0.0, "eps_tol must be positive"),
            (open01(self.gamma_theta), "gamma_theta must lie in (0, 1)"),
            (open01(self.gamma_l), "gamma_l must lie in (0, 1)"),
            (self.delta > 0.0, "delta must be positive"),
            (self.s_theta > 1.0, "s_theta must exceed 1"),
            (self.s_l >= 1.0, "s_l must be at least 1"),
            (self.eta_l > 0.0 && self.eta_l < 0.5, "eta_l must lie in (0, 1/2)"),
            (open01(self.gamma_min), "gamma_min must lie in (0, 1)"),
            (self.theta_max_factor > 0.0 && self.theta_min_factor > 0.0, "theta factors must be positive"),
            (self.mu_init > 0.0 && self.kappa_eps > 0.0, "mu_init and kappa_eps must be positive"),
            (open01(self.kappa_mu) && self.theta_mu > 1.0 && self.theta_mu < 2.0, "need kappa_mu in (0, 1) and theta_mu in (1, 2)"),
            (open01(self.tau_min), "tau_min must lie in (0, 1)"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub mode: Mode,
    pub cost: f64,
    pub theta: f64,
    pub lagrangian: f64,
    /// `E` in equality mode, `E_μ` in barrier mode.
    pub error: f64,
    /// Accepted step size; `None` when no line search ran.
    pub gamma: Option<f64>,
    pub delta_w: f64,
    pub m: f64,
    pub l_type: bool,
    pub filter_size: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    LineSearchFailure,
    IllConditioned,
    RegularizationOverflow,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIters => "max_iters",
            Status::LineSearchFailure => "line_search_failure",
            Status::IllConditioned => "ill_conditioned",
            Status::RegularizationOverflow => "regularization_overflow",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub status: Status,
    pub iterate: Iterate,
    pub records: Vec<IterationRecord>,
    pub wall_time: Duration,
}

impl SolverReport {
    /// Number of line searches performed.
    pub fn iterations(&self) -> usize {
        self.records.iter().filter(|r| r.gamma.is_some()).count()
    }
}

/// `max_t max(‖∇_{u_t}𝓛‖_∞, ‖c_t‖_∞)`, using the multipliers stored in `it`.
pub fn optimality_error(model: &dyn OcpModel, it: &Iterate) -> Result<f64> {
    let r = kkt_residuals(model, it)?;
    Ok(r.grad_u.iter().chain(&r.constraints).map(|v| v.amax()).fold(0.0, f64::max))
}

pub fn total_cost(model: &dyn OcpModel, it: &Iterate) -> f64 {
    (0..it.horizon()).map(|t| model.cost(t, &it.x[t], &it.u[t])).sum()
}

/// Builds the starting iterate: masked controls lifted to `max(u, 1e-2)`,
/// rolled out from `x̂₁`, `φ = 0`, `z = 1` on the mask.
pub fn initial_iterate(model: &dyn OcpModel, u_init: &[DVector<f64>]) -> Result<Iterate> {
    if u_init.iter().any(|u| u.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite);
    }
    let mask = control_mask(model);
    let controls: Vec<DVector<f64>> = u_init
        .iter()
        .map(|u| {
            let mut u = u.clone();
            for (i, &m) in mask.iter().enumerate() {
                if m && i < u.len() {
                    u[i] = u[i].max(1e-2);
                }
            }
            u
        })
        .collect();
    let mut it = Iterate::from_controls(model, &controls)?;
    for z in &mut it.z {
        for (i, &m) in mask.iter().enumerate() {
            if m {
                z[i] = 1.0;
            }
        }
    }
    Ok(it)
}

fn failure_status(e: &Error) -> Status {
    match e {
        Error::RegularizationOverflow { .. } => Status::RegularizationOverflow,
        _ => Status::IllConditioned,
    }
}

/// Solves the problem from the open-loop controls `u_init`.
///
/// Numerical breakdowns are reported through [`Status`]; an `Err` is only
/// returned for invalid inputs (dimensions, configuration, non-finite start).
pub fn solve(model: &dyn OcpModel, u_init: &[DVector<f64>], config: &SolverConfig) -> Result<SolverReport> {
    solve_from(model, initial_iterate(model, u_init)?, config)
}

/// Warm start from a full primal-dual point. `start` must satisfy the dynamics
/// and, on masked components, have `u, z > 0`.
pub fn solve_from(model: &dyn OcpModel, start_point: Iterate, config: &SolverConfig) -> Result<SolverReport> {
    config.validate()?;
    let start = Instant::now();
    let reg_params = RegParams { eps_tol: config.eps_tol, ..config.reg };
    let barrier = has_bounds(model);

    let mut it = start_point;
    let mut bstate = BarrierState::new(config.mu_init, config.tau_min);
    let mut mode = if barrier { Mode::Barrier { mu: bstate.mu } } else { Mode::Equality };
    it.refresh_merit(model, mode.mu())?;

    let scale = it.theta.max(1.0);
    let theta_min = config.theta_min_factor * scale;
    let mut filter = Filter::new(config.theta_max_factor * scale);
    let mut reg = RegState::default();
    let mut records = Vec::new();
    let mut status = Status::MaxIters;

    let mut k = 0;
    loop {
        let mut bp = match backward_pass(model, &mut it, reg, mode, &reg_params, config.gauss_newton) {
            Ok(bp) => bp,
            Err(e) => {
                status = failure_status(&e);
                break;
            }
        };
        let mut error = optimality_error(model, &it)?;
        if barrier {
            let e0 = error.max(complementarity_error(model, &it, 0.0));
            if e0 < config.eps_tol {
                status = Status::Converged;
            } else {
                let (s, advanced) = advance_subproblem(bstate, model, &it, &mut filter, config, k)?;
                if advanced > 0 {
                    bstate = s;
                    mode = Mode::Barrier { mu: bstate.mu };
                    it.refresh_merit(model, bstate.mu)?;
                    bp = match backward_pass(model, &mut it, bp.reg, mode, &reg_params, config.gauss_newton) {
                        Ok(bp) => bp,
                        Err(e) => {
                            status = failure_status(&e);
                            break;
                        }
                    };
                }
                error = error.max(complementarity_error(model, &it, bstate.mu));
            }
        } else if error < config.eps_tol {
            status = Status::Converged;
        }
        reg = bp.reg;

        let mut record = IterationRecord {
            k,
            mode,
            cost: total_cost(model, &it),
            theta: it.theta,
            lagrangian: it.lagrangian,
            error,
            gamma: None,
            delta_w: bp.max_delta_w,
            m: bp.expected_decrease,
            l_type: false,
            filter_size: filter.len(),
            trials: 0,
        };
        if status == Status::Converged || k >= config.max_iters {
            records.push(record);
            break;
        }

        let ls = line_search(model, &it, &bp.gains, bp.expected_decrease, &filter, config, mode, theta_min);
        record.trials = ls.trials();
        let Some(trial) = ls.accepted else {
            records.push(record);
            status = Status::LineSearchFailure;
            break;
        };
        if !ls.l_type {
            augment_filter(&mut filter, it.theta, it.lagrangian, config.gamma_theta, config.gamma_l);
        }
        record.gamma = Some(trial.gamma);
        record.l_type = ls.l_type;
        record.filter_size = filter.len();
        records.push(record);

        it = trial.iterate;
        it.refresh_merit(model, mode.mu())?;
        k += 1;
    }
    Ok(SolverReport { status, iterate: it, records, wall_time: start.elapsed() })
}

/// One row of [`local_rate_probe`]: distances to the solution before and after
/// a single full step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    pub radius: f64,
    pub before: f64,
    pub after: f64,
    /// False when the step broke down; such rows should be left out of fits.
    pub valid: bool,
}

/// Euclidean distance between two iterates over `(x, u, φ)`.
pub fn primal_dual_distance(a: &Iterate, b: &Iterate) -> f64 {
    let mut s = 0.0;
    for t in 0..a.horizon() {
        s += (&a.x[t] - &b.x[t]).norm_squared();
        s += (&a.u[t] - &b.u[t]).norm_squared();
        s += (&a.phi[t] - &b.phi[t]).norm_squared();
    }
    s.sqrt()
}

/// Perturbs the controls and constraint multipliers of `solution` by a random
/// direction of each norm in `radii`, re-rolls the states and takes one
/// undamped step. Only meaningful for equality-mode problems.
pub fn local_rate_probe(
    model: &dyn OcpModel,
    config: &SolverConfig,
    solution: &Iterate,
    radii: &[f64],
    seed: u64,
) -> Result<Vec<RateSample>> {
    let reg_params = RegParams { eps_tol: config.eps_tol, ..config.reg };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = solution.horizon();
    let mut dir_u: Vec<DVector<f64>> =
        solution.u.iter().map(|u| DVector::from_fn(u.len(), |_, _| rng.gen_range(-1.0..1.0))).collect();
    let mut dir_phi: Vec<DVector<f64>> =
        solution.phi.iter().map(|p| DVector::from_fn(p.len(), |_, _| rng.gen_range(-1.0..1.0))).collect();
    let norm = dir_u.iter().chain(&dir_phi).map(|v| v.norm_squared()).sum::<f64>().sqrt();
    for v in dir_u.iter_mut().chain(dir_phi.iter_mut()) {
        *v /= norm;
    }

    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let controls: Vec<_> = (0..n).map(|t| &solution.u[t] + &dir_u[t] * r).collect();
        let mut start = Iterate::from_controls(model, &controls)?;
        for ((p, p0), d) in start.phi.iter_mut().zip(&solution.phi).zip(&dir_phi) {
            *p = p0 + d * r;
        }
        start.z = solution.z.clone();
        start.refresh_merit(model, 0.0)?;
        let before = primal_dual_distance(&start, solution);
        let step = backward_pass(model, &mut start, RegState::default(), Mode::Equality, &reg_params, config.gauss_newton)
            .ok()
            .and_then(|bp| rollout(model, &start, &bp.gains, 1.0, Mode::Equality));
        rows.push(match step {
            Some(trial) => RateSample { radius: r, before, after: primal_dual_distance(&trial.iterate, solution), valid: true },
            None => RateSample { radius: r, before, after: f64::NAN, valid: false },
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log(after)` against `log(before)` over valid rows.
pub fn fitted_rate(samples: &[RateSample]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.valid && s.before > 0.0 && s.after > 0.0)
        .map(|s| (s.before.ln(), s.after.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
