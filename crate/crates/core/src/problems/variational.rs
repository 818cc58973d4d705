//! Midpoint variational integrator for two-degree-of-freedom systems.
//!
//! With `L_d(a, b) = dt · L((a + b)/2, (b − a)/dt)`, the forced discrete
//! Euler–Lagrange residual is `D₂L_d(q₀, q₁) + D₁L_d(q₁, q₂) + dt·F`.

use super::autodiff::Scalar;

pub trait Mechanical {
    /// `(∂L/∂q, ∂L/∂q̇)` at configuration `q` and velocity `v`.
    fn lagrangian_gradients<S: Scalar>(&self, q: &[S; 2], v: &[S; 2]) -> ([S; 2], [S; 2]);
}

fn midpoint<S: Scalar>(a: &[S], b: &[S], dt: f64) -> ([S; 2], [S; 2]) {
    let m = [(a[0].clone() + &b[0]) * 0.5, (a[1].clone() + &b[1]) * 0.5];
    let v = [(b[0].clone() - &a[0]) / dt, (b[1].clone() - &a[1]) / dt];
    (m, v)
}

/// Unforced residual `D₂L_d(q₀, q₁) + D₁L_d(q₁, q₂)`.
pub fn del_residual<S: Scalar, M: Mechanical>(sys: &M, q0: &[S], q1: &[S], q2: &[S], dt: f64) -> [S; 2] {
    let (ma, va) = midpoint(q0, q1, dt);
    let (mb, vb) = midpoint(q1, q2, dt);
    let (lq_a, lv_a) = sys.lagrangian_gradients(&ma, &va);
    let (lq_b, lv_b) = sys.lagrangian_gradients(&mb, &vb);
    let half = 0.5 * dt;
    [0, 1].map(|i| (lq_a[i].clone() + &lq_b[i]) * half + &lv_a[i] - &lv_b[i])
}
