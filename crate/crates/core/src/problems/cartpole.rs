//! Cartpole swing-up with variational time stepping and, optionally, Coulomb
//! friction on the cart rail and the pole pivot.
//!
//! State `(q_{t−1}, q_t)` with `q = (p, θ)` and `θ = 0` hanging down. Controls:
//! force, next configuration, and with friction, per joint `β⁺, β⁻, ψ` and the
//! slacks `s₁ = ψ + v`, `s₂ = ψ − v`, `s₃ = μN − β⁺ − β⁻`, paired by the relaxed
//! products `β⁺s₁ = β⁻s₂ = ψs₃ = κ`.

use std::f64::consts::PI;

use nalgebra::DVector;

use super::autodiff::{AutoDiff, Scalar, StageFunctions};
use super::spec::BenchmarkSpec;
use super::variational::{del_residual, Mechanical};
use crate::model::Dims;

const BP: usize = 3;
const BM: usize = 5;
const PSI: usize = 7;
const S1: usize = 9;
const S2: usize = 11;
const S3: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct CartPole {
    pub horizon: usize,
    pub dt: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub force_weight: f64,
    /// Running weight on the distance of every stage to the target.
    pub state_weight: f64,
    pub terminal_weight: f64,
    /// Friction coefficients of the cart rail and the pole pivot.
    pub friction: Option<[f64; 2]>,
    pub kappa: f64,
}

pub fn cartpole_spec() -> BenchmarkSpec {
    BenchmarkSpec::new(
        "cartpole_friction",
        50,
        0.05,
        &[
            ("cart_mass", 1.0),
            ("pole_mass", 0.2),
            ("pole_length", 0.5),
            ("gravity", 9.81),
            ("force_weight", 1e-2),
            ("state_weight", 1.0),
            ("terminal_weight", 1e3),
            ("friction_cart", 0.1),
            ("friction_pole", 0.1),
            ("kappa", 1e-7),
        ],
    )
    .with_range("cart_mass", 0.8, 1.2)
    .with_range("pole_mass", 0.15, 0.25)
    .with_range("pole_length", 0.4, 0.6)
    .with_range("friction_cart", 0.01, 0.3)
    .with_range("friction_pole", 0.01, 0.3)
}

pub fn build_cartpole(spec: &BenchmarkSpec, with_friction: bool) -> AutoDiff<CartPole> {
    AutoDiff(CartPole {
        horizon: spec.horizon,
        dt: spec.dt,
        cart_mass: spec.param("cart_mass"),
        pole_mass: spec.param("pole_mass"),
        pole_length: spec.param("pole_length"),
        gravity: spec.param("gravity"),
        force_weight: spec.param("force_weight"),
        state_weight: spec.param("state_weight"),
        terminal_weight: spec.param("terminal_weight"),
        friction: with_friction.then(|| [spec.param("friction_cart"), spec.param("friction_pole")]),
        kappa: spec.param("kappa"),
    })
}

pub fn build_cartpole_friction(spec: &BenchmarkSpec) -> AutoDiff<CartPole> {
    build_cartpole(spec, true)
}

impl Mechanical for CartPole {
    fn lagrangian_gradients<S: Scalar>(&self, q: &[S; 2], v: &[S; 2]) -> ([S; 2], [S; 2]) {
        let (mc, mp, l, g) = (self.cart_mass, self.pole_mass, self.pole_length, self.gravity);
        let (s, c) = (q[1].sin(), q[1].cos());
        let lv = [
            v[0].clone() * (mc + mp) + v[1].clone() * &c * (mp * l),
            v[0].clone() * &c * (mp * l) + v[1].clone() * (mp * l * l),
        ];
        let lq = [S::from(0.0), -(v[0].clone() * &v[1] * &s * (mp * l)) - s * (mp * g * l)];
        (lq, lv)
    }
}

impl CartPole {
    /// Normal loads of the two friction contacts.
    pub fn normal_loads(&self) -> [f64; 2] {
        [(self.cart_mass + self.pole_mass) * self.gravity, self.pole_mass * self.gravity]
    }

    /// Static trajectory at the bottom with zero force and interior friction variables.
    pub fn initial_controls(&self) -> Vec<DVector<f64>> {
        let mut u = DVector::zeros(self.dims().nu);
        if let Some(mu) = self.friction {
            let n = self.normal_loads();
            for j in 0..2 {
                u[BP + j] = 1e-2;
                u[BM + j] = 1e-2;
                u[PSI + j] = 0.1;
                u[S1 + j] = 0.1;
                u[S2 + j] = 0.1;
                u[S3 + j] = (mu[j] * n[j] - 2e-2).max(1e-2);
            }
        }
        vec![u; self.horizon]
    }

    /// Largest `|β⁺s₁|, |β⁻s₂|, |ψs₃|` over the trajectory.
    pub fn complementarity_residual(&self, u: &[DVector<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        if self.friction.is_some() {
            for ut in u {
                for j in 0..2 {
                    for (a, b) in [(BP, S1), (BM, S2), (PSI, S3)] {
                        worst = worst.max((ut[a + j] * ut[b + j]).abs());
                    }
                }
            }
        }
        worst
    }

    /// Net friction force on each joint, `β⁺ − β⁻`.
    pub fn friction_forces(&self, u: &DVector<f64>) -> [f64; 2] {
        match self.friction {
            Some(_) => [u[BP] - u[BM], u[BP + 1] - u[BM + 1]],
            None => [0.0, 0.0],
        }
    }
}

impl StageFunctions for CartPole {
    fn dims(&self) -> Dims {
        match self.friction {
            Some(_) => Dims::new(self.horizon, 4, 15, 14),
            None => Dims::new(self.horizon, 4, 3, 2),
        }
        .expect("cartpole dimensions")
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(4)
    }

    fn nonneg_mask(&self) -> Vec<bool> {
        match self.friction {
            Some(_) => (0..15).map(|i| i >= BP).collect(),
            None => Vec::new(),
        }
    }

    fn affine_dynamics(&self) -> bool {
        true
    }

    fn cost<S: Scalar>(&self, t: usize, x: &[S], u: &[S]) -> S {
        let target = [0.0, PI];
        let weight = if t + 1 == self.horizon { self.terminal_weight } else { self.state_weight };
        let mut c = u[0].powi(2) * (0.5 * self.force_weight);
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
        let dt = self.dt;
        let r = del_residual(self, &x[0..2], &x[2..4], &u[1..3], dt);
        let mut out = vec![r[0].clone() + u[0].clone() * dt, r[1].clone()];
        let Some(mu) = self.friction else {
            return out;
        };
        for j in 0..2 {
            out[j] += (u[BP + j].clone() - &u[BM + j]) * dt;
        }
        let n = self.normal_loads();
        for j in 0..2 {
            let v = (u[1 + j].clone() - &x[2 + j]) / dt;
            out.push(u[S1 + j].clone() - &u[PSI + j] - &v);
            out.push(u[S2 + j].clone() - &u[PSI + j] + v);
            out.push(u[S3 + j].clone() + &u[BP + j] + &u[BM + j] - mu[j] * n[j]);
        }
        for j in 0..2 {
            out.push(u[BP + j].clone() * &u[S1 + j] - self.kappa);
            out.push(u[BM + j].clone() * &u[S2 + j] - self.kappa);
            out.push(u[PSI + j].clone() * &u[S3 + j] - self.kappa);
        }
        out
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
        let m = build_cartpole(&cartpole_spec(), false);
        let u = m.0.initial_controls();
        let x = rollout_states(&m, &u);
        assert_eq!(evaluate_theta(&m, &x, &u).unwrap(), 0.0);
    }

    #[test]
    fn static_start_theta_is_reproducible() {
        let m = build_cartpole_friction(&cartpole_spec());
        let u = m.0.initial_controls();
        let x = rollout_states(&m, &u);
        let a = evaluate_theta(&m, &x, &u).unwrap();
        let b = evaluate_theta(&m, &x, &u).unwrap();
        assert!(a.is_finite() && a > 0.0);
        assert_eq!(a.to_bits(), b.to_bits());
        // only the complementarity products are violated at the static start
        let mut manual = 0.0;
        for ut in &u {
            for j in 0..2 {
                for (p, q) in [(BP, S1), (BM, S2), (PSI, S3)] {
                    manual += (ut[p + j] * ut[q + j] - 1e-7).abs();
                }
            }
        }
        assert!((a - manual).abs() <= 1e-12 * manual);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for friction in [false, true] {
            let m = build_cartpole(&cartpole_spec(), friction);
            let nu = m.dims().nu;
            let u: Vec<_> = (0..50).map(|_| DVector::from_fn(nu, |_, _| rng.gen_range(0.05..1.0))).collect();
            let x = rollout_states(&m, &u);
            let nc = m.dims().nc;
            let phi: Vec<_> = (0..50).map(|_| DVector::from_fn(nc, |_, _| rng.gen_range(-1.0..1.0))).collect();
            let rep = derivative_check(&m, &x, &u, &phi, 1e-5).unwrap();
            assert!(rep.max() <= 1e-5, "{rep:?}");
        }
    }
}
