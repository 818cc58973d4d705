//! Seeded random equality-constrained linear-quadratic instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linear::{LinearQuadratic, QuadCost};
use crate::error::Result;
use crate::model::Dims;

/// Smallest singular value given to every constraint Jacobian `∂c/∂u`.
pub const MIN_CONSTRAINT_SINGULAR_VALUE: f64 = 0.5;

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-scale..scale))
}

fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    uniform(rng, n, n, 1.0).qr().q()
}

/// Random linear dynamics, a jointly strictly convex quadratic cost in
/// `(x, u)` and full-row-rank constraints `D x + E u + e = 0`.
///
/// The joint cost Hessian is `WᵀW + ½ I`, so the Hessian is positive definite
/// on every constraint null space.
pub fn build_eqlq(seed: u64, horizon: usize, nx: usize, nu: usize, nc: usize) -> Result<LinearQuadratic> {
    let dims = Dims::new(horizon, nx, nu, nc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = DVector::from_fn(nx, |_, _| rng.gen_range(-1.0..1.0));

    let mut a = Vec::with_capacity(horizon - 1);
    let mut b = Vec::with_capacity(horizon - 1);
    let mut d = Vec::with_capacity(horizon - 1);
    for _ in 0..horizon - 1 {
        a.push(DMatrix::identity(nx, nx) + uniform(&mut rng, nx, nx, 0.3));
        b.push(uniform(&mut rng, nx, nu, 1.0));
        d.push(DVector::from_fn(nx, |_, _| rng.gen_range(-0.2..0.2)));
    }

    let mut cost = Vec::with_capacity(horizon);
    let mut c_x = Vec::with_capacity(horizon);
    let mut c_u = Vec::with_capacity(horizon);
    let mut c_0 = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let w = uniform(&mut rng, nx + nu, nx + nu, 1.0);
        let h = w.tr_mul(&w) + DMatrix::identity(nx + nu, nx + nu) * 0.5;
        cost.push(QuadCost {
            q_xx: h.view((0, 0), (nx, nx)).into_owned(),
            r_uu: h.view((nx, nx), (nu, nu)).into_owned(),
            s_ux: h.view((nx, 0), (nu, nx)).into_owned(),
            q: DVector::from_fn(nx, |_, _| rng.gen_range(-1.0..1.0)),
            r: DVector::from_fn(nu, |_, _| rng.gen_range(-1.0..1.0)),
        });

        if nc == 0 {
            c_u.push(DMatrix::zeros(0, nu));
        } else {
            let left = orthogonal(&mut rng, nc);
            let right = orthogonal(&mut rng, nu);
            let mut sigma = DMatrix::zeros(nc, nu);
            for i in 0..nc {
                sigma[(i, i)] = rng.gen_range(MIN_CONSTRAINT_SINGULAR_VALUE..2.0);
            }
            c_u.push(&left * sigma * right.transpose());
        }
        c_x.push(uniform(&mut rng, nc, nx, 1.0));
        c_0.push(DVector::from_fn(nc, |_, _| rng.gen_range(-1.0..1.0)));
    }

    let model = LinearQuadratic { dims, x0, a, b, d, cost, c_x, c_u, c_0 };
    model.validate()?;
    Ok(model)
}
