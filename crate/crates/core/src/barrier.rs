//! Barrier-parameter sequencing for problems with `u ≥ 0` masks.

use crate::error::Result;
use crate::filter::{boundary_fraction, Filter};
use crate::model::{control_mask, Iterate, OcpModel};
use crate::solver::{optimality_error, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierState {
    pub mu: f64,
    pub tau: f64,
    /// Index of the current barrier subproblem.
    pub j: usize,
}

impl BarrierState {
    pub fn new(mu: f64, tau_min: f64) -> Self {
        Self { mu, tau: boundary_fraction(tau_min, mu), j: 0 }
    }
}

/// `max_t ‖z_t ⊙ u_t − μ e‖_∞` over masked components.
pub fn complementarity_error(model: &dyn OcpModel, it: &Iterate, mu: f64) -> f64 {
    let mask = control_mask(model);
    let mut worst: f64 = 0.0;
    for (u, z) in it.u.iter().zip(&it.z) {
        for (i, &m) in mask.iter().enumerate() {
            if m {
                worst = worst.max((z[i] * u[i] - mu).abs());
            }
        }
    }
    worst
}

/// `E_μ = max(E, max_t ‖z_t ⊙ u_t − μ e‖_∞)`. With `μ = 0` this is the overall
/// convergence measure.
pub fn perturbed_error(model: &dyn OcpModel, it: &Iterate, mu: f64) -> Result<f64> {
    Ok(optimality_error(model, it)?.max(complementarity_error(model, it, mu)))
}

/// `max(ε_tol/10, min(κ_μ μ, μ^{θ_μ}))`
pub fn update_mu(mu: f64, eps_tol: f64, kappa_mu: f64, theta_mu: f64) -> f64 {
    (eps_tol / 10.0).max((kappa_mu * mu).min(mu.powf(theta_mu)))
}

/// Closes barrier subproblems while `E_μ < κ_ε μ`. On the first iteration
/// (`k = 0`) the test is repeated until it fails; otherwise at most one
/// subproblem is closed. Each advance resets the filter to its `θ_max` cap.
///
/// Returns the new state and the number of subproblems closed.
pub fn advance_subproblem(
    state: BarrierState,
    model: &dyn OcpModel,
    it: &Iterate,
    filter: &mut Filter,
    config: &SolverConfig,
    k: usize,
) -> Result<(BarrierState, usize)> {
    let e = optimality_error(model, it)?;
    let mut state = state;
    let mut advanced = 0;
    loop {
        let e_mu = e.max(complementarity_error(model, it, state.mu));
        if e_mu >= config.kappa_eps * state.mu {
            break;
        }
        let mu = update_mu(state.mu, config.eps_tol, config.kappa_mu, config.theta_mu);
        let stalled = mu == state.mu;
        state = BarrierState { mu, tau: boundary_fraction(config.tau_min, mu), j: state.j + 1 };
        filter.reset();
        advanced += 1;
        if k != 0 || stalled {
            break;
        }
    }
    Ok((state, advanced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_models::FixedConstraints;
    use crate::model::Dims;
    use nalgebra::DVector;

    fn bounded(u: f64, z: f64) -> (FixedConstraints, Iterate) {
        let m = FixedConstraints {
            dims: Dims::new(1, 1, 1, 0).unwrap(),
            values: vec![DVector::zeros(0)],
            mask: vec![true],
            cost_scale: 0.0,
        };
        let mut it = Iterate::from_controls(&m, &[DVector::from_element(1, u)]).unwrap();
        it.z[0][0] = z;
        (m, it)
    }

    #[test]
    fn perturbed_error_examples() {
        let (m, it) = bounded(1.0, 1.0);
        // L_u = 0 here, so E reduces to the −z term of the gradient
        assert_eq!(complementarity_error(&m, &it, 1.0), 0.0);
        let (m, it) = bounded(2.0, 1.0);
        assert_eq!(complementarity_error(&m, &it, 1.0), 1.0);
        assert_eq!(complementarity_error(&m, &it, 0.0), 2.0);
        assert_eq!(perturbed_error(&m, &it, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn mu_update_examples() {
        assert_eq!(update_mu(1.0, 1e-7, 0.2, 1.2), 0.2);
        assert!((update_mu(0.2, 1e-7, 0.2, 1.2) - 0.04).abs() < 1e-15);
        assert_eq!(update_mu(1e-7, 1e-7, 0.2, 1.2), 1e-8);
    }

    #[test]
    fn mu_sequence_contracts_until_floor() {
        let mut mu = 1.0;
        let mut tau = boundary_fraction(0.99, mu);
        for _ in 0..40 {
            let next = update_mu(mu, 1e-7, 0.2, 1.2);
            assert!(next <= mu);
            if next > 1e-8 {
                assert!(next <= 0.2 * mu + 1e-18);
            }
            let t = boundary_fraction(0.99, next);
            assert!(t >= tau);
            mu = next;
            tau = t;
        }
        assert_eq!(mu, 1e-8);
    }

    #[test]
    fn advance_gate() {
        let cfg = SolverConfig::default();
        let mut f = Filter::new(5.0);
        f.insert(1.0, 1.0);

        // E_μ = 20 ≥ κ_ε μ: unchanged
        let (m, it) = bounded(21.0, 1.0);
        let s = BarrierState::new(1.0, cfg.tau_min);
        let (s2, n) = advance_subproblem(s, &m, &it, &mut f, &cfg, 3).unwrap();
        assert_eq!((s2, n), (s, 0));
        assert_eq!(f.len(), 1);

        // centred point: one advance when k > 0
        let (m, mut it) = bounded(1.0, 1.0);
        it.z[0][0] = 0.0;
        let (s2, n) = advance_subproblem(s, &m, &it, &mut f, &cfg, 3).unwrap();
        assert_eq!(n, 1);
        assert_eq!(s2.mu, 0.2);
        assert_eq!(s2.j, 1);
        assert!(f.is_empty());
        assert_eq!(f.theta_max(), 5.0);
    }

    #[test]
    fn advance_repeats_at_first_iteration() {
        let cfg = SolverConfig::default();
        let mut f = Filter::new(f64::INFINITY);
        // z ⊙ u = 0.1 and E = 0 (z = 0 contributes via the gradient only through −z)
        let (m, mut it) = bounded(1.0, 0.0);
        it.z[0][0] = 0.0;
        it.u[0][0] = 1.0;
        // E_μ = max(0, μ) < 10 μ for every μ: keeps advancing until the floor
        let s = BarrierState::new(1.0, cfg.tau_min);
        let (s2, n) = advance_subproblem(s, &m, &it, &mut f, &cfg, 0).unwrap();
        assert!(n > 3);
        assert_eq!(s2.mu, cfg.eps_tol / 10.0);
        assert_eq!(s2.j, n);
    }
}
