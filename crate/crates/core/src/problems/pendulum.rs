//! Pendulum swing-up in inverse-dynamics form: the next state is a decision
//! variable tied to the current one by a semi-implicit Euler residual.

use std::f64::consts::PI;

use nalgebra::DVector;

use super::autodiff::{AutoDiff, Scalar, StageFunctions};
use super::spec::BenchmarkSpec;
use crate::model::Dims;

#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub horizon: usize,
    pub dt: f64,
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
    pub torque_weight: f64,
    pub terminal_weight: f64,
    /// When set, the first control is `s = τ + limit ≥ 0` instead of `τ`.
    pub torque_limit: Option<f64>,
}

pub fn pendulum_spec() -> BenchmarkSpec {
    BenchmarkSpec::new(
        "pendulum",
        50,
        0.05,
        &[
            ("mass", 1.0),
            ("length", 1.0),
            ("gravity", 9.81),
            ("damping", 0.1),
            ("torque_weight", 0.1),
            ("terminal_weight", 1e5),
            ("torque_limit", 2.0),
        ],
    )
    .with_range("mass", 0.8, 1.2)
    .with_range("length", 0.8, 1.2)
}

/// Builds the equality-only variant, or the masked variant when `bounded`.
pub fn build_pendulum_invdyn(spec: &BenchmarkSpec, bounded: bool) -> AutoDiff<Pendulum> {
    AutoDiff(Pendulum {
        horizon: spec.horizon,
        dt: spec.dt,
        mass: spec.param("mass"),
        length: spec.param("length"),
        gravity: spec.param("gravity"),
        damping: spec.param("damping"),
        torque_weight: spec.param("torque_weight"),
        terminal_weight: spec.param("terminal_weight"),
        torque_limit: bounded.then(|| spec.param("torque_limit")),
    })
}

impl Pendulum {
    fn torque<S: Scalar>(&self, u0: &S) -> S {
        match self.torque_limit {
            Some(lim) => u0.clone() - lim,
            None => u0.clone(),
        }
    }

    /// Rest at the bottom with zero torque.
    pub fn initial_controls(&self) -> Vec<DVector<f64>> {
        let first = self.torque_limit.unwrap_or(0.0);
        vec![DVector::from_vec(vec![first, 0.0, 0.0]); self.horizon]
    }
}

impl StageFunctions for Pendulum {
    fn dims(&self) -> Dims {
        Dims::new(self.horizon, 2, 3, 2).expect("pendulum dimensions")
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(2)
    }

    fn nonneg_mask(&self) -> Vec<bool> {
        match self.torque_limit {
            Some(_) => vec![true, false, false],
            None => Vec::new(),
        }
    }

    fn affine_dynamics(&self) -> bool {
        true
    }

    fn cost<S: Scalar>(&self, t: usize, _x: &[S], u: &[S]) -> S {
        let tau = self.torque(&u[0]);
        let mut c = tau.powi(2) * (0.5 * self.torque_weight);
        if t + 1 == self.horizon {
            let dq = u[1].clone() - PI;
            c += (dq.powi(2) + u[2].powi(2)) * (0.5 * self.terminal_weight);
        }
        c
    }

    fn dynamics<S: Scalar>(&self, _t: usize, _x: &[S], u: &[S]) -> Vec<S> {
        vec![u[1].clone(), u[2].clone()]
    }

    fn constraints<S: Scalar>(&self, _t: usize, x: &[S], u: &[S]) -> Vec<S> {
        let (m, l, g, b, dt) = (self.mass, self.length, self.gravity, self.damping, self.dt);
        let (q, v) = (&x[0], &x[1]);
        let (qn, vn) = (&u[1], &u[2]);
        let tau = self.torque(&u[0]);
        let accel = tau - q.sin() * (m * g * l) - vn.clone() * b;
        vec![
            (vn.clone() - v) * (m * l * l) - accel * dt,
            qn.clone() - q - vn.clone() * dt,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derivative_check, rollout_states, OcpModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rest_is_consistent_without_gravity() {
        let mut s = pendulum_spec();
        s.set("gravity", 0.0).unwrap();
        let m = build_pendulum_invdyn(&s, false);
        let u = m.0.initial_controls();
        let x = rollout_states(&m, &u);
        for t in 0..s.horizon {
            assert_eq!(m.constraints(t, &x[t], &u[t]).amax(), 0.0);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for bounded in [false, true] {
            let m = build_pendulum_invdyn(&pendulum_spec(), bounded);
            let u: Vec<_> = (0..50).map(|_| DVector::from_fn(3, |_, _| rng.gen_range(0.1..2.0))).collect();
            let x = rollout_states(&m, &u);
            let phi: Vec<_> = (0..50).map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))).collect();
            let rep = derivative_check(&m, &x, &u, &phi, 1e-5).unwrap();
            assert!(rep.max() <= 1e-6, "{rep:?}");
        }
    }
}
