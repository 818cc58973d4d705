//! Exact first and second derivatives by forward-mode hyper-dual numbers, for
//! models whose stage functions are written once, generically over the scalar.

use nalgebra::{DMatrix, DVector, Dyn, U1};
use num_dual::{Dual2DVec64, DualNum};

use crate::linalg::Tensor3;
use crate::model::{Dims, OcpModel, ScalarDerivs, SecondDerivs, VectorDerivs};

/// Scalar type the stage functions are evaluated with: `f64` for values,
/// second-order dual vectors for derivatives.
pub trait Scalar: DualNum<Primitive = f64> {}
impl<T: DualNum<Primitive = f64>> Scalar for T {}

pub fn cst<S: Scalar>(v: f64) -> S {
    S::from(v)
}

/// Stage functions of an optimal control problem, generic over the scalar.
pub trait StageFunctions: Send + Sync {
    fn dims(&self) -> Dims;
    fn initial_state(&self) -> DVector<f64>;
    fn nonneg_mask(&self) -> Vec<bool> {
        Vec::new()
    }
    fn cost<S: Scalar>(&self, t: usize, x: &[S], u: &[S]) -> S;
    fn dynamics<S: Scalar>(&self, t: usize, x: &[S], u: &[S]) -> Vec<S>;
    fn constraints<S: Scalar>(&self, t: usize, x: &[S], u: &[S]) -> Vec<S>;
    /// Whether the dynamics are affine, in which case no curvature is reported.
    fn affine_dynamics(&self) -> bool {
        false
    }
}

/// Adapter implementing [`OcpModel`] for any [`StageFunctions`].
#[derive(Debug, Clone, PartialEq)]
pub struct AutoDiff<P>(pub P);

fn seeded(x: &DVector<f64>, u: &DVector<f64>) -> (Vec<Dual2DVec64>, Vec<Dual2DVec64>) {
    let n = x.len() + u.len();
    let xs = x.iter().enumerate().map(|(i, &v)| Dual2DVec64::from_re(v).derivative(n, i)).collect();
    let us = u.iter().enumerate().map(|(i, &v)| Dual2DVec64::from_re(v).derivative(n, x.len() + i)).collect();
    (xs, us)
}

struct Split {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn split(d: Dual2DVec64, n: usize) -> Split {
    Split {
        value: d.re,
        grad: d.v1.unwrap_generic(U1, Dyn(n)).transpose(),
        hess: d.v2.unwrap_generic(Dyn(n), Dyn(n)),
    }
}

fn vector_derivs(out: Vec<Dual2DVec64>, nx: usize, nu: usize, curvature: bool) -> VectorDerivs {
    let n = nx + nu;
    let m = out.len();
    let parts: Vec<Split> = out.into_iter().map(|d| split(d, n)).collect();
    let value = DVector::from_fn(m, |i, _| parts[i].value);
    let jx = DMatrix::from_fn(m, nx, |i, j| parts[i].grad[j]);
    let ju = DMatrix::from_fn(m, nu, |i, j| parts[i].grad[nx + j]);
    let block = |r0: usize, c0: usize, r: usize, c: usize| {
        let slices = parts.iter().map(|p| p.hess.view((r0, c0), (r, c)).into_owned()).collect();
        Tensor3::from_slices(slices, r, c).expect("slices share one shape")
    };
    let second = curvature.then(|| SecondDerivs {
        xx: block(0, 0, nx, nx),
        ux: block(nx, 0, nu, nx),
        uu: block(nx, nx, nu, nu),
    });
    VectorDerivs { value, x: jx, u: ju, second }
}

impl<P: StageFunctions> OcpModel for AutoDiff<P> {
    fn dims(&self) -> Dims {
        self.0.dims()
    }

    fn initial_state(&self) -> DVector<f64> {
        self.0.initial_state()
    }

    fn nonneg_mask(&self) -> Vec<bool> {
        self.0.nonneg_mask()
    }

    fn cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.0.cost(t, x.as_slice(), u.as_slice())
    }

    fn dynamics(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.0.dynamics(t, x.as_slice(), u.as_slice()))
    }

    fn constraints(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.0.constraints(t, x.as_slice(), u.as_slice()))
    }

    fn cost_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> ScalarDerivs {
        let (nx, nu) = (x.len(), u.len());
        let (xs, us) = seeded(x, u);
        let s = split(self.0.cost(t, &xs, &us), nx + nu);
        ScalarDerivs {
            value: s.value,
            x: s.grad.rows(0, nx).into_owned(),
            u: s.grad.rows(nx, nu).into_owned(),
            xx: s.hess.view((0, 0), (nx, nx)).into_owned(),
            ux: s.hess.view((nx, 0), (nu, nx)).into_owned(),
            uu: s.hess.view((nx, nx), (nu, nu)).into_owned(),
        }
    }

    fn dynamics_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> VectorDerivs {
        let (xs, us) = seeded(x, u);
        vector_derivs(self.0.dynamics(t, &xs, &us), x.len(), u.len(), !self.0.affine_dynamics())
    }

    fn constraint_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> VectorDerivs {
        let (xs, us) = seeded(x, u);
        vector_derivs(self.0.constraints(t, &xs, &us), x.len(), u.len(), true)
    }
}
