//! Direct solvers for linear-quadratic problems, used as ground truth.
//!
//! Both oracles read the problem data off the model's derivatives at the origin,
//! so they accept any `OcpModel` whose dynamics and constraints are affine and
//! whose cost is quadratic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Iterate, OcpModel};

struct LqStage {
    q_xx: DMatrix<f64>,
    r_uu: DMatrix<f64>,
    s_ux: DMatrix<f64>,
    q: DVector<f64>,
    r: DVector<f64>,
    c_x: DMatrix<f64>,
    c_u: DMatrix<f64>,
    c_0: DVector<f64>,
    /// `(A, B, d)`; absent at the last stage.
    dynamics: Option<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)>,
}

fn extract(model: &dyn OcpModel) -> Vec<LqStage> {
    let d = model.dims();
    let (x, u) = (DVector::zeros(d.nx), DVector::zeros(d.nu));
    (0..d.horizon)
        .map(|t| {
            let c = model.cost_derivatives(t, &x, &u);
            let g = model.constraint_derivatives(t, &x, &u);
            let dynamics = (t + 1 < d.horizon).then(|| {
                let f = model.dynamics_derivatives(t, &x, &u);
                (f.x, f.u, f.value)
            });
            LqStage { q_xx: c.xx, r_uu: c.uu, s_ux: c.ux, q: c.x, r: c.u, c_x: g.x, c_u: g.u, c_0: g.value, dynamics }
        })
        .collect()
}

fn finish(model: &dyn OcpModel, x: Vec<DVector<f64>>, u: Vec<DVector<f64>>, phi: Vec<DVector<f64>>, lambda: Vec<DVector<f64>>) -> Result<Iterate> {
    if x.iter().chain(&u).chain(&phi).chain(&lambda).any(|v| v.iter().any(|e| !e.is_finite())) {
        return Err(Error::OracleDegenerate);
    }
    let d = model.dims();
    let mut it = Iterate {
        x,
        u,
        phi,
        lambda,
        z: vec![DVector::zeros(d.nu); d.horizon],
        theta: 0.0,
        lagrangian: 0.0,
    };
    it.refresh_merit(model, 0.0)?;
    Ok(it)
}

/// Assembles the full first-order optimality system over all
/// `(x_t, u_t, φ_t, λ_t)` and solves it with a single dense LU.
pub fn stacked_kkt_oracle(model: &dyn OcpModel) -> Result<Iterate> {
    let d = model.dims();
    let (n, nx, nu, nc) = (d.horizon, d.nx, d.nu, d.nc);
    let stages = extract(model);
    let blk = 2 * nx + nu + nc;
    let (ox, ou, op, ol) = (0, nx, nx + nu, nx + nu + nc);
    let dim = n * blk;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    for (t, s) in stages.iter().enumerate() {
        let b0 = t * blk;
        let next = b0 + blk;
        // ∇_x: Q x + Sᵀu + q + Dᵀφ − λ_t + Aᵀλ_{t+1}
        k.view_mut((b0 + ox, b0 + ox), (nx, nx)).copy_from(&s.q_xx);
        k.view_mut((b0 + ox, b0 + ou), (nx, nu)).copy_from(&s.s_ux.transpose());
        k.view_mut((b0 + ox, b0 + op), (nx, nc)).copy_from(&s.c_x.transpose());
        k.view_mut((b0 + ox, b0 + ol), (nx, nx)).copy_from(&-DMatrix::identity(nx, nx));
        rhs.rows_mut(b0 + ox, nx).copy_from(&-&s.q);
        // ∇_u: R u + S x + r + Eᵀφ + Bᵀλ_{t+1}
        k.view_mut((b0 + ou, b0 + ox), (nu, nx)).copy_from(&s.s_ux);
        k.view_mut((b0 + ou, b0 + ou), (nu, nu)).copy_from(&s.r_uu);
        k.view_mut((b0 + ou, b0 + op), (nu, nc)).copy_from(&s.c_u.transpose());
        rhs.rows_mut(b0 + ou, nu).copy_from(&-&s.r);
        // c = D x + E u + e
        k.view_mut((b0 + op, b0 + ox), (nc, nx)).copy_from(&s.c_x);
        k.view_mut((b0 + op, b0 + ou), (nc, nu)).copy_from(&s.c_u);
        rhs.rows_mut(b0 + op, nc).copy_from(&-&s.c_0);
        // dynamics: x_0 = x̂ at the first stage, otherwise A x_{t-1} + B u_{t-1} + d − x_t = 0
        k.view_mut((b0 + ol, b0 + ox), (nx, nx)).copy_from(&-DMatrix::identity(nx, nx));
        if t == 0 {
            rhs.rows_mut(b0 + ol, nx).copy_from(&-model.initial_state());
        } else {
            let prev = b0 - blk;
            let (a, b, dd) = stages[t - 1].dynamics.as_ref().expect("dynamics before last stage");
            k.view_mut((b0 + ol, prev + ox), (nx, nx)).copy_from(a);
            k.view_mut((b0 + ol, prev + ou), (nx, nu)).copy_from(b);
            rhs.rows_mut(b0 + ol, nx).copy_from(&-dd);
        }
        if let Some((a, b, _)) = &s.dynamics {
            k.view_mut((b0 + ox, next + ol), (nx, nx)).copy_from(&a.transpose());
            k.view_mut((b0 + ou, next + ol), (nu, nx)).copy_from(&b.transpose());
        }
    }

    let sol = k.lu().solve(&rhs).ok_or(Error::OracleDegenerate)?;
    let part = |t: usize, off: usize, len: usize| sol.rows(t * blk + off, len).into_owned();
    finish(
        model,
        (0..n).map(|t| part(t, ox, nx)).collect(),
        (0..n).map(|t| part(t, ou, nu)).collect(),
        (0..n).map(|t| part(t, op, nc)).collect(),
        (0..n).map(|t| part(t, ol, nx)).collect(),
    )
}

/// Discrete Riccati recursion for problems without stage constraints.
pub fn riccati_oracle(model: &dyn OcpModel) -> Result<Iterate> {
    let d = model.dims();
    if d.nc != 0 {
        return Err(Error::Dimension("riccati_oracle requires nc = 0".into()));
    }
    let stages = extract(model);
    let n = d.horizon;
    let mut p = DMatrix::<f64>::zeros(d.nx, d.nx);
    let mut pv = DVector::<f64>::zeros(d.nx);
    let mut gains = Vec::with_capacity(n);
    for s in stages.iter().rev() {
        let (mut qxx, mut quu, mut qux, mut qx, mut qu) =
            (s.q_xx.clone(), s.r_uu.clone(), s.s_ux.clone(), s.q.clone(), s.r.clone());
        if let Some((a, b, dd)) = &s.dynamics {
            let g = &p * dd + &pv;
            qxx += a.tr_mul(&(&p * a));
            quu += b.tr_mul(&(&p * b));
            qux += b.tr_mul(&(&p * a));
            qx += a.tr_mul(&g);
            qu += b.tr_mul(&g);
        }
        let chol = quu.cholesky().ok_or(Error::OracleDegenerate)?;
        let kk = -chol.solve(&qux);
        let kf = -chol.solve(&qu);
        p = &qxx + qux.tr_mul(&kk);
        p = (&p + p.transpose()) * 0.5;
        pv = &qx + qux.tr_mul(&kf);
        gains.push((kf, kk));
    }
    gains.reverse();

    let mut x = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut xt = model.initial_state();
    for (t, (kf, kk)) in gains.iter().enumerate() {
        let ut = kf + kk * &xt;
        let next = stages[t].dynamics.as_ref().map(|(a, b, dd)| a * &xt + b * &ut + dd);
        x.push(xt.clone());
        u.push(ut);
        if let Some(v) = next {
            xt = v;
        }
    }
    let mut lambda = vec![DVector::zeros(d.nx); n];
    for t in (0..n).rev() {
        let s = &stages[t];
        let mut l = &s.q_xx * &x[t] + s.s_ux.tr_mul(&u[t]) + &s.q;
        if let Some((a, _, _)) = &s.dynamics {
            l += a.tr_mul(&lambda[t + 1]);
        }
        lambda[t] = l;
    }
    finish(model, x, u, vec![DVector::zeros(0); n], lambda)
}

#[cfg(test)]
mod tests {
    use super::super::eqlq::build_eqlq;
    use super::super::linear::{LinearQuadratic, QuadCost};
    use super::*;
    use crate::model::{kkt_residuals, Dims};

    #[test]
    fn trivial_problem() {
        let mut m = LinearQuadratic::zero_problem(3, 1, 1);
        for c in &mut m.cost {
            c.r_uu = DMatrix::identity(1, 1);
        }
        let it = stacked_kkt_oracle(&m).unwrap();
        assert!(it.u.iter().all(|u| u.amax() < 1e-15));
        assert!(it.lambda.iter().all(|l| l.amax() < 1e-15));
    }

    #[test]
    fn one_variable_by_hand() {
        // ℓ = ½(x² + u²), c = u − 1  ⇒  u* = 1, φ* = −1
        let m = LinearQuadratic {
            dims: Dims::new(1, 1, 1, 1).unwrap(),
            x0: DVector::zeros(1),
            a: vec![],
            b: vec![],
            d: vec![],
            cost: vec![QuadCost {
                q_xx: DMatrix::identity(1, 1),
                r_uu: DMatrix::identity(1, 1),
                s_ux: DMatrix::zeros(1, 1),
                q: DVector::zeros(1),
                r: DVector::zeros(1),
            }],
            c_x: vec![DMatrix::zeros(1, 1)],
            c_u: vec![DMatrix::identity(1, 1)],
            c_0: vec![DVector::from_element(1, -1.0)],
        };
        let it = stacked_kkt_oracle(&m).unwrap();
        assert!((it.u[0][0] - 1.0).abs() < 1e-14);
        assert!((it.phi[0][0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn oracle_point_is_kkt() {
        for seed in 0..10 {
            let m = build_eqlq(seed, 5, 2, 2, 1).unwrap();
            let it = stacked_kkt_oracle(&m).unwrap();
            assert!(kkt_residuals(&m, &it).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn riccati_agrees_with_stacked_solve() {
        for seed in 0..5 {
            let m = build_eqlq(seed, 8, 3, 2, 0).unwrap();
            let a = stacked_kkt_oracle(&m).unwrap();
            let b = riccati_oracle(&m).unwrap();
            for t in 0..8 {
                assert!((&a.u[t] - &b.u[t]).amax() < 1e-9);
                assert!((&a.x[t] - &b.x[t]).amax() < 1e-9);
                assert!((&a.lambda[t] - &b.lambda[t]).amax() < 1e-9);
            }
        }
    }
}
