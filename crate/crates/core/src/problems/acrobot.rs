//! Acrobot swing-up with variational time stepping and, optionally, elbow
//! joint limits enforced through impulses.
//!
//! State `(q_{t−1}, q_t)`, `q = (θ₁, θ₂)` with `θ = 0` hanging down. Controls:
//! elbow torque, next configuration and, with limits, the impulses `λ⁺, λ⁻`
//! and the slacks `s⁺ = L − θ₂'`, `s⁻ = θ₂' + L`, paired by `λ±s± = κ`.

use std::f64::consts::PI;

use nalgebra::DVector;

use super::autodiff::{AutoDiff, Scalar, StageFunctions};
use super::spec::BenchmarkSpec;
use super::variational::{del_residual, Mechanical};
use crate::model::Dims;

const LP: usize = 3;
const LM: usize = 4;
const SP: usize = 5;
const SM: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Acrobot {
    pub horizon: usize,
    pub dt: f64,
    pub masses: [f64; 2],
    pub lengths: [f64; 2],
    pub gravity: f64,
    pub torque_weight: f64,
    /// Running weight on the distance of every stage to the target.
    pub state_weight: f64,
    pub terminal_weight: f64,
    /// Symmetric elbow limit `|θ₂| ≤ L`.
    pub joint_limit: Option<f64>,
    pub kappa: f64,
}

pub fn acrobot_spec() -> BenchmarkSpec {
    BenchmarkSpec::new(
        "acrobot_contact",
        50,
        0.05,
        &[
            ("mass_1", 1.0),
            ("mass_2", 1.0),
            ("length_1", 1.0),
            ("length_2", 1.0),
            ("gravity", 9.81),
            ("torque_weight", 1.0),
            ("state_weight", 1.0),
            ("terminal_weight", 1e3),
            ("joint_limit", PI / 2.0),
            ("kappa", 1e-7),
        ],
    )
    .with_range("mass_1", 0.8, 1.2)
    .with_range("mass_2", 0.8, 1.2)
    .with_range("length_1", 0.8, 1.2)
    .with_range("length_2", 0.8, 1.2)
}

pub fn build_acrobot(spec: &BenchmarkSpec, with_limits: bool) -> AutoDiff<Acrobot> {
    AutoDiff(Acrobot {
        horizon: spec.horizon,
        dt: spec.dt,
        masses: [spec.param("mass_1"), spec.param("mass_2")],
        lengths: [spec.param("length_1"), spec.param("length_2")],
        gravity: spec.param("gravity"),
        torque_weight: spec.param("torque_weight"),
        state_weight: spec.param("state_weight"),
        terminal_weight: spec.param("terminal_weight"),
        joint_limit: with_limits.then(|| spec.param("joint_limit")),
        kappa: spec.param("kappa"),
    })
}

pub fn build_acrobot_contact(spec: &BenchmarkSpec) -> AutoDiff<Acrobot> {
    build_acrobot(spec, true)
}

impl Mechanical for Acrobot {
    fn lagrangian_gradients<S: Scalar>(&self, q: &[S; 2], v: &[S; 2]) -> ([S; 2], [S; 2]) {
        let [m1, m2] = self.masses;
        let [l1, l2] = self.lengths;
        let (lc1, lc2) = (0.5 * l1, 0.5 * l2);
        // uniform rods, inertias about their own pivots
        let (i1, i2) = (m1 * l1 * l1 / 3.0, m2 * l2 * l2 / 3.0);
        let g = self.gravity;
        let k = m2 * l1 * lc2;
        let (s2, c2) = (q[1].sin(), q[1].cos());
        let s12 = (q[0].clone() + &q[1]).sin();
        let m11 = c2.clone() * (2.0 * k) + (i1 + i2 + m2 * l1 * l1);
        let m12 = c2 * k + i2;
        let lv = [
            m11 * &v[0] + m12.clone() * &v[1],
            m12 * &v[0] + v[1].clone() * i2,
        ];
        let lq = [
            -(q[0].sin() * ((m1 * lc1 + m2 * l1) * g)) - s12.clone() * (m2 * g * lc2),
            -(s2 * k * (v[0].clone() * &v[0] + v[0].clone() * &v[1])) - s12 * (m2 * g * lc2),
        ];
        (lq, lv)
    }
}

impl Acrobot {
    /// Hanging at rest, zero torque, slacks at their consistent values.
    pub fn initial_controls(&self) -> Vec<DVector<f64>> {
        let mut u = DVector::zeros(self.dims().nu);
        if let Some(lim) = self.joint_limit {
            u[LP] = 1e-2;
            u[LM] = 1e-2;
            u[SP] = lim;
            u[SM] = lim;
        }
        vec![u; self.horizon]
    }

    /// `max_t max(0, |θ₂| − L)` over the configurations in `u`.
    pub fn limit_violation(&self, u: &[DVector<f64>], limit: f64) -> f64 {
        u.iter().map(|ut| (ut[2].abs() - limit).max(0.0)).fold(0.0, f64::max)
    }

    pub fn impulses(&self, u: &DVector<f64>) -> [f64; 2] {
        match self.joint_limit {
            Some(_) => [u[LP], u[LM]],
            None => [0.0, 0.0],
        }
    }

    /// Largest `|λ±s±|` over the trajectory.
    pub fn complementarity_residual(&self, u: &[DVector<f64>]) -> f64 {
        if self.joint_limit.is_none() {
            return 0.0;
        }
        u.iter().map(|ut| (ut[LP] * ut[SP]).abs().max((ut[LM] * ut[SM]).abs())).fold(0.0, f64::max)
    }
}

impl StageFunctions for Acrobot {
    fn dims(&self) -> Dims {
        match self.joint_limit {
            Some(_) => Dims::new(self.horizon, 4, 7, 6),
            None => Dims::new(self.horizon, 4, 3, 2),
        }
        .expect("acrobot dimensions")
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(4)
    }

    fn nonneg_mask(&self) -> Vec<bool> {
        match self.joint_limit {
            Some(_) => (0..7).map(|i| i >= LP).collect(),
            None => Vec::new(),
        }
    }

    fn affine_dynamics(&self) -> bool {
        true
    }

    fn cost<S: Scalar>(&self, t: usize, x: &[S], u: &[S]) -> S {
        let target = [PI, 0.0];
        let weight = if t + 1 == self.horizon { self.terminal_weight } else { self.state_weight };
        let mut c = u[0].powi(2) * (0.5 * self.torque_weight);
        for j in 0..2 {
            let e = u[1 + j].clone() - target[j];
            let v = (u[1 + j].clone() - &x[2 + j]) / self.dt;
            c += (e.powi(2) + v.powi(2)) * (0.5 * weight);
        }
        c
    }

    fn dynamics<S: Scalar>(&self, _t: usize, x: &[S], u: &[S]) -> Vec<S> {
        vec![x[2].clone(), x[3].clone(), u[1].clone(), u[2].clone()]
    }

    fn constraints<S: Scalar>(&self, _t: usize, x: &[S], u: &[S]) -> Vec<S> {
        let r = del_residual(self, &x[0..2], &x[2..4], &u[1..3], self.dt);
        let [r0, r1] = r;
        let elbow = r1 + u[0].clone() * self.dt;
        let Some(lim) = self.joint_limit else {
            return vec![r0, elbow];
        };
        vec![
            r0,
            elbow + &u[LM] - &u[LP],
            u[SP].clone() + &u[2] - lim,
            u[SM].clone() - &u[2] - lim,
            u[LP].clone() * &u[SP] - self.kappa,
            u[LM].clone() * &u[SM] - self.kappa,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derivative_check, evaluate_theta, rollout_states, OcpModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hanging_rest_satisfies_dynamics() {
        let m = build_acrobot(&acrobot_spec(), false);
        let u = m.0.initial_controls();
        let x = rollout_states(&m, &u);
        assert_eq!(evaluate_theta(&m, &x, &u).unwrap(), 0.0);
    }

    #[test]
    fn energy_is_conserved_without_torque() {
        // free swing from a tilted rest: the midpoint rule keeps the energy bounded
        let m = build_acrobot(&acrobot_spec(), false).0;
        let dt = m.dt;
        let mut q0 = [0.6, -0.3];
        let mut q1 = q0;
        let energy = |a: [f64; 2], b: [f64; 2]| {
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let v = [(b[0] - a[0]) / dt, (b[1] - a[1]) / dt];
            let (_, lv) = m.lagrangian_gradients(&mid, &v);
            let kin = 0.5 * (lv[0] * v[0] + lv[1] * v[1]);
            let [m1, m2] = m.masses;
            let [l1, l2] = m.lengths;
            kin - m1 * 9.81 * 0.5 * l1 * mid[0].cos() - m2 * 9.81 * (l1 * mid[0].cos() + 0.5 * l2 * (mid[0] + mid[1]).cos())
        };
        let e0 = energy(q0, q1);
        for _ in 0..200 {
            // Newton on the unforced residual for the next configuration
            let mut q2 = [2.0 * q1[0] - q0[0], 2.0 * q1[1] - q0[1]];
            for _ in 0..30 {
                let r = del_residual(&m, &q0, &q1, &q2, dt);
                let h = 1e-7;
                let mut j = [[0.0; 2]; 2];
                for k in 0..2 {
                    let mut qp = q2;
                    qp[k] += h;
                    let rp = del_residual(&m, &q0, &q1, &qp, dt);
                    j[0][k] = (rp[0] - r[0]) / h;
                    j[1][k] = (rp[1] - r[1]) / h;
                }
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                q2[0] -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
                q2[1] -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
            }
            q0 = q1;
            q1 = q2;
        }
        let drift = (energy(q0, q1) - e0).abs();
        assert!(drift < 0.05 * e0.abs(), "energy drift {drift}");
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for limits in [false, true] {
            let m = build_acrobot(&acrobot_spec(), limits);
            let (nu, nc) = (m.dims().nu, m.dims().nc);
            let u: Vec<_> = (0..50).map(|_| DVector::from_fn(nu, |_, _| rng.gen_range(0.05..1.0))).collect();
            let x = rollout_states(&m, &u);
            let phi: Vec<_> = (0..50).map(|_| DVector::from_fn(nc, |_, _| rng.gen_range(-1.0..1.0))).collect();
            let rep = derivative_check(&m, &x, &u, &phi, 1e-5).unwrap();
            assert!(rep.max() <= 1e-5, "{rep:?}");
        }
    }
}
