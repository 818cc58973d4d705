use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Dims, OcpModel, ScalarDerivs, VectorDerivs};

/// Quadratic stage cost `½xᵀQx + ½uᵀRu + uᵀSx + qᵀx + rᵀu`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCost {
    pub q_xx: DMatrix<f64>,
    pub r_uu: DMatrix<f64>,
    /// `nu × nx`
    pub s_ux: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: DVector<f64>,
}

/// Time-varying linear dynamics `x' = A x + B u + d` with affine constraints
/// `D x + E u + e = 0` and quadratic costs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuadratic {
    pub dims: Dims,
    pub x0: DVector<f64>,
    /// Length `horizon - 1`.
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub d: Vec<DVector<f64>>,
    /// Length `horizon`.
    pub cost: Vec<QuadCost>,
    pub c_x: Vec<DMatrix<f64>>,
    pub c_u: Vec<DMatrix<f64>>,
    pub c_0: Vec<DVector<f64>>,
}

impl LinearQuadratic {
    pub fn validate(&self) -> Result<()> {
        let Dims { horizon: n, nx, nu, nc } = self.dims;
        let bad = |what: &str| Err(Error::Dimension(format!("linear-quadratic model: {what}")));
        if self.x0.len() != nx {
            return bad("x0 length");
        }
        if self.a.len() + 1 != n || self.b.len() + 1 != n || self.d.len() + 1 != n {
            return bad("dynamics must have horizon - 1 stages");
        }
        if self.cost.len() != n || self.c_x.len() != n || self.c_u.len() != n || self.c_0.len() != n {
            return bad("cost and constraints must have horizon stages");
        }
        for t in 0..n - 1 {
            if self.a[t].shape() != (nx, nx) || self.b[t].shape() != (nx, nu) || self.d[t].len() != nx {
                return bad("dynamics block shape");
            }
        }
        for t in 0..n {
            let c = &self.cost[t];
            if c.q_xx.shape() != (nx, nx)
                || c.r_uu.shape() != (nu, nu)
                || c.s_ux.shape() != (nu, nx)
                || c.q.len() != nx
                || c.r.len() != nu
            {
                return bad("cost block shape");
            }
            if self.c_x[t].shape() != (nc, nx) || self.c_u[t].shape() != (nc, nu) || self.c_0[t].len() != nc {
                return bad("constraint block shape");
            }
        }
        Ok(())
    }

    /// Identity dynamics, zero cost, no constraints.
    pub fn zero_problem(horizon: usize, nx: usize, nu: usize) -> Self {
        let stage_cost = QuadCost {
            q_xx: DMatrix::zeros(nx, nx),
            r_uu: DMatrix::zeros(nu, nu),
            s_ux: DMatrix::zeros(nu, nx),
            q: DVector::zeros(nx),
            r: DVector::zeros(nu),
        };
        Self {
            dims: Dims::new(horizon, nx, nu, 0).expect("valid dimensions"),
            x0: DVector::zeros(nx),
            a: vec![DMatrix::identity(nx, nx); horizon - 1],
            b: vec![DMatrix::zeros(nx, nu); horizon - 1],
            d: vec![DVector::zeros(nx); horizon - 1],
            cost: vec![stage_cost; horizon],
            c_x: vec![DMatrix::zeros(0, nx); horizon],
            c_u: vec![DMatrix::zeros(0, nu); horizon],
            c_0: vec![DVector::zeros(0); horizon],
        }
    }
}

impl OcpModel for LinearQuadratic {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn initial_state(&self) -> DVector<f64> {
        self.x0.clone()
    }

    fn cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let c = &self.cost[t];
        0.5 * x.dot(&(&c.q_xx * x)) + 0.5 * u.dot(&(&c.r_uu * u)) + u.dot(&(&c.s_ux * x)) + c.q.dot(x) + c.r.dot(u)
    }

    fn dynamics(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a[t] * x + &self.b[t] * u + &self.d[t]
    }

    fn constraints(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c_x[t] * x + &self.c_u[t] * u + &self.c_0[t]
    }

    fn cost_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> ScalarDerivs {
        let c = &self.cost[t];
        ScalarDerivs {
            value: self.cost(t, x, u),
            x: &c.q_xx * x + c.s_ux.tr_mul(u) + &c.q,
            u: &c.r_uu * u + &c.s_ux * x + &c.r,
            xx: c.q_xx.clone(),
            ux: c.s_ux.clone(),
            uu: c.r_uu.clone(),
        }
    }

    fn dynamics_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> VectorDerivs {
        VectorDerivs {
            value: self.dynamics(t, x, u),
            x: self.a[t].clone(),
            u: self.b[t].clone(),
            second: None,
        }
    }

    fn constraint_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> VectorDerivs {
        VectorDerivs {
            value: self.constraints(t, x, u),
            x: self.c_x[t].clone(),
            u: self.c_u[t].clone(),
            second: None,
        }
    }
}
