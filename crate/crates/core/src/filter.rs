//! Forward pass, step-acceptance tests and the backtracking filter line search.

use nalgebra::DVector;

use crate::backward::GainsTrajectory;
use crate::model::{control_mask, evaluate_lagrangian, evaluate_theta, Iterate, Mode, OcpModel};
use crate::solver::SolverConfig;

/// Taboo region: the union of `{θ ≥ θ_max}` and the north-east quadrants of
/// every stored `(θ, 𝓛)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    entries: Vec<(f64, f64)>,
    theta_max: f64,
}

impl Filter {
    pub fn new(theta_max: f64) -> Self {
        Self { entries: Vec::new(), theta_max }
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reset(&mut self) {
        self.entries.clear();
    }

    /// Adds the corner `(θ, 𝓛)` and drops entries whose region it covers.
    pub fn insert(&mut self, theta: f64, lagrangian: f64) {
        if self.entries.iter().any(|&(a, b)| a <= theta && b <= lagrangian) {
            return;
        }
        self.entries.retain(|&(a, b)| !(theta <= a && lagrangian <= b));
        self.entries.push((theta, lagrangian));
    }
}

/// True when `(θ⁺, 𝓛⁺)` lies in the taboo region.
pub fn filter_blocks(filter: &Filter, theta: f64, lagrangian: f64) -> bool {
    theta >= filter.theta_max
        || filter.entries.iter().any(|&(tf, lf)| theta >= tf && lagrangian >= lf)
}

/// `θ⁺ ≤ (1 − γ_θ) θ̄` or `𝓛⁺ ≤ 𝓛̄ − γ_𝓛 θ̄`
pub fn sufficient_decrease(
    theta_bar: f64,
    lag_bar: f64,
    theta_plus: f64,
    lag_plus: f64,
    gamma_theta: f64,
    gamma_l: f64,
) -> bool {
    theta_plus <= (1.0 - gamma_theta) * theta_bar || lag_plus <= lag_bar - gamma_l * theta_bar
}

/// `γ m < 0` and `(−γ m)^{s_𝓛} γ^{1 − s_𝓛} > δ θ̄^{s_θ}`
pub fn switching_holds(m: f64, gamma: f64, theta_bar: f64, delta: f64, s_theta: f64, s_l: f64) -> bool {
    gamma * m < 0.0 && (-gamma * m).powf(s_l) * gamma.powf(1.0 - s_l) > delta * theta_bar.powf(s_theta)
}

/// `𝓛⁺ ≤ 𝓛̄ + η γ m`
pub fn armijo_holds(lag_bar: f64, lag_plus: f64, m: f64, gamma: f64, eta: f64) -> bool {
    lag_plus <= lag_bar + eta * gamma * m
}

/// Adds `((1 − γ_θ) θ̄, 𝓛̄ − γ_𝓛 θ̄)` to the filter.
pub fn augment_filter(filter: &mut Filter, theta_bar: f64, lag_bar: f64, gamma_theta: f64, gamma_l: f64) {
    filter.insert((1.0 - gamma_theta) * theta_bar, lag_bar - gamma_l * theta_bar);
}

/// A candidate next iterate produced by the forward pass.
#[derive(Debug, Clone)]
pub struct TrialPoint {
    pub iterate: Iterate,
    pub gamma: f64,
    pub theta: f64,
    pub lagrangian: f64,
}

/// Nonlinear rollout of the update rule with step size `gamma`.
///
/// Returns `None` if a non-finite value appears along the trajectory. In
/// barrier mode, a trial with nonpositive masked controls gets `𝓛⁺ = +∞`.
pub fn rollout(
    model: &dyn OcpModel,
    current: &Iterate,
    gains: &GainsTrajectory,
    gamma: f64,
    mode: Mode,
) -> Option<TrialPoint> {
    let n = current.horizon();
    let mask = control_mask(model);
    let mut next = current.clone();
    let mut x = model.initial_state();
    for t in 0..n {
        let g = &gains.stages[t];
        let dx = &x - &current.x[t];
        let u = &current.u[t] + &g.alpha * gamma + &g.beta * &dx;
        let phi = &current.phi[t] + &g.psi * gamma + &g.omega * &dx;
        if let Mode::Barrier { .. } = mode {
            let dz: DVector<f64> = &g.chi * gamma + &g.zeta * &dx;
            for i in 0..u.len() {
                if mask[i] {
                    next.z[t][i] = current.z[t][i] + dz[i];
                }
            }
        }
        if !(x.iter().all(|v| v.is_finite()) && u.iter().all(|v| v.is_finite()) && phi.iter().all(|v| v.is_finite())) {
            return None;
        }
        let x_next = if t + 1 < n { Some(model.dynamics(t, &x, &u)) } else { None };
        next.x[t] = x;
        next.u[t] = u;
        next.phi[t] = phi;
        match x_next {
            Some(v) => x = v,
            None => break,
        }
    }
    let theta = evaluate_theta(model, &next.x, &next.u).ok()?;
    let lagrangian =
        evaluate_lagrangian(model, &next.x, &next.u, &next.phi, mode.mu()).unwrap_or(f64::INFINITY);
    if !theta.is_finite() || lagrangian.is_nan() {
        return None;
    }
    next.theta = theta;
    next.lagrangian = lagrangian;
    Some(TrialPoint { iterate: next, gamma, theta, lagrangian })
}

/// `u⁺ ≥ (1 − τ) ū` and `z⁺ ≥ (1 − τ) z̄` on all masked components.
pub fn fraction_to_boundary_ok(trial: &Iterate, current: &Iterate, mask: &[bool], tau: f64) -> bool {
    trial.u.iter().zip(&current.u).zip(trial.z.iter().zip(&current.z)).all(|((up, ub), (zp, zb))| {
        mask.iter().enumerate().all(|(i, &m)| {
            !m || (up[i] >= (1.0 - tau) * ub[i] && zp[i] >= (1.0 - tau) * zb[i])
        })
    })
}

/// `τ = max(τ_min, 1 − μ)`
pub fn boundary_fraction(tau_min: f64, mu: f64) -> f64 {
    tau_min.max(1.0 - mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Diverged,
    BoundaryViolated,
    FilterBlocked,
    InsufficientDecrease,
    ArmijoFailed,
}

impl Rejection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rejection::Diverged => "diverged",
            Rejection::BoundaryViolated => "boundary-violated",
            Rejection::FilterBlocked => "filter-blocked",
            Rejection::InsufficientDecrease => "insufficient-decrease",
            Rejection::ArmijoFailed => "armijo-failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub accepted: Option<TrialPoint>,
    /// Accepted under the switching condition with the Armijo test.
    pub l_type: bool,
    pub rejections: Vec<(f64, Rejection)>,
}

impl LineSearchOutcome {
    pub fn gamma(&self) -> Option<f64> {
        self.accepted.as_ref().map(|t| t.gamma)
    }

    pub fn trials(&self) -> usize {
        self.rejections.len() + usize::from(self.accepted.is_some())
    }
}

/// Backtracking line search over `γ = 1, ½, ¼, …` until a trial is accepted or
/// `γ < γ_min`.
#[allow(clippy::too_many_arguments)]
pub fn line_search(
    model: &dyn OcpModel,
    current: &Iterate,
    gains: &GainsTrajectory,
    m: f64,
    filter: &Filter,
    config: &SolverConfig,
    mode: Mode,
    theta_min: f64,
) -> LineSearchOutcome {
    let mask = control_mask(model);
    let tau = boundary_fraction(config.tau_min, mode.mu());
    let (theta_bar, lag_bar) = (current.theta, current.lagrangian);
    let mut rejections = Vec::new();
    let mut gamma = 1.0;
    while gamma >= config.gamma_min {
        let trial = match rollout(model, current, gains, gamma, mode) {
            Some(t) => t,
            None => {
                rejections.push((gamma, Rejection::Diverged));
                gamma *= 0.5;
                continue;
            }
        };
        let verdict = if matches!(mode, Mode::Barrier { .. })
            && !fraction_to_boundary_ok(&trial.iterate, current, &mask, tau)
        {
            Err(Rejection::BoundaryViolated)
        } else if filter_blocks(filter, trial.theta, trial.lagrangian) {
            Err(Rejection::FilterBlocked)
        } else if theta_bar < theta_min
            && switching_holds(m, gamma, theta_bar, config.delta, config.s_theta, config.s_l)
        {
            if armijo_holds(lag_bar, trial.lagrangian, m, gamma, config.eta_l) {
                Ok(true)
            } else {
                Err(Rejection::ArmijoFailed)
            }
        } else if sufficient_decrease(
            theta_bar,
            lag_bar,
            trial.theta,
            trial.lagrangian,
            config.gamma_theta,
            config.gamma_l,
        ) {
            Ok(false)
        } else {
            Err(Rejection::InsufficientDecrease)
        };
        match verdict {
            Ok(l_type) => return LineSearchOutcome { accepted: Some(trial), l_type, rejections },
            Err(r) => rejections.push((gamma, r)),
        }
        gamma *= 0.5;
    }
    LineSearchOutcome { accepted: None, l_type: false, rejections }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_membership() {
        let f = Filter::new(f64::INFINITY);
        assert!(!filter_blocks(&f, 1e300, 1e300));

        let mut f = Filter::new(f64::INFINITY);
        f.insert(1.0, 5.0);
        assert!(filter_blocks(&f, 2.0, 6.0));
        assert!(!filter_blocks(&f, 0.5, 6.0));
        assert!(!filter_blocks(&f, 2.0, 4.0));

        let f = Filter::new(3.0);
        assert!(filter_blocks(&f, 3.0, -1e9));
        assert!(!filter_blocks(&f, 2.999, -1e9));
    }

    #[test]
    fn sufficient_decrease_thresholds() {
        assert!(sufficient_decrease(1.0, 0.0, 0.9, 1e9, 0.1, 0.1));
        assert!(sufficient_decrease(1.0, 10.0, 1.0, 9.9, 0.1, 0.1));
        assert!(!sufficient_decrease(1.0, 10.0, 1.0, 9.95, 0.1, 0.1));
        assert!(sufficient_decrease(0.0, 3.0, 0.0, 3.0, 0.1, 0.1));
    }

    #[test]
    fn switching_cases() {
        assert!(switching_holds(-1.0, 1.0, 0.1, 1.0, 2.0, 1.0));
        assert!(!switching_holds(1.0, 1.0, 0.0, 1.0, 2.0, 1.0));
        // (−γm)^{s_𝓛} γ^{1−s_𝓛} collapses to γ = 0.25 when m = −1
        assert!(!switching_holds(-1.0, 0.25, 1.0, 1.0, 1.1, 2.3));
        assert!(switching_holds(-1.0, 0.25, 0.2, 1.0, 1.1, 2.3));
    }

    #[test]
    fn armijo_cases() {
        assert!(armijo_holds(1.0, 0.95, -1.0, 0.5, 0.1));
        assert!(!armijo_holds(1.0, 0.9500001, -1.0, 0.5, 0.1));
        assert!(armijo_holds(1.0, 1.0, 0.0, 1.0, 0.1));
        assert!(!armijo_holds(1.0, 1.0 + 1e-15, 0.0, 1.0, 0.1));
    }

    #[test]
    fn quadratic_exact_step_satisfies_armijo() {
        // 𝓛(γ) = 𝓛̄ + γ m + ½ γ² |m| has its minimiser at γ = 1
        for &m in &[-1e-3_f64, -1.0, -250.0] {
            for &eta in &[1e-4, 0.1, 0.49] {
                let lag_plus = 2.0 + m + 0.5 * m.abs();
                assert!(armijo_holds(2.0, lag_plus, m, 1.0, eta));
            }
        }
    }

    #[test]
    fn augmentation_and_pruning() {
        let mut f = Filter::new(f64::INFINITY);
        augment_filter(&mut f, 1.0, 10.0, 0.1, 0.1);
        assert_eq!(f.entries(), &[(0.9, 9.9)]);
        f.insert(0.5, 9.0);
        assert_eq!(f.entries(), &[(0.5, 9.0)]);
        f.insert(0.5, 9.0);
        assert_eq!(f.len(), 1);
        f.insert(0.7, 8.0);
        assert_eq!(f.len(), 2);
        f.reset();
        assert!(f.is_empty());
    }

    #[test]
    fn boundary_rule() {
        assert_eq!(boundary_fraction(0.99, 0.5), 0.99);
        assert_eq!(boundary_fraction(0.99, 1e-4), 1.0 - 1e-4);
        let one = |v: f64| vec![DVector::from_element(1, v)];
        let mk = |u: f64, z: f64| Iterate {
            x: one(0.0),
            u: one(u),
            phi: vec![DVector::zeros(0)],
            lambda: one(0.0),
            z: one(z),
            theta: 0.0,
            lagrangian: 0.0,
        };
        let cur = mk(1.0, 1.0);
        assert!(fraction_to_boundary_ok(&mk(0.5, 1.0), &cur, &[true], 0.99));
        assert!(!fraction_to_boundary_ok(&mk(0.005, 1.0), &cur, &[true], 0.99));
        assert!(!fraction_to_boundary_ok(&mk(1.0, 0.001), &cur, &[true], 0.99));
        assert!(fraction_to_boundary_ok(&mk(-5.0, -5.0), &cur, &[false], 0.99));
    }
}
