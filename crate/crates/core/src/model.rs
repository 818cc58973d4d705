//! Problem abstraction, trajectory containers and residual evaluation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{contract_first, Tensor3};

/// Problem dimensions. `horizon` is the number of stages `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub nc: usize,
}

impl Dims {
    pub fn new(horizon: usize, nx: usize, nu: usize, nc: usize) -> Result<Self> {
        if horizon == 0 || nx == 0 || nu == 0 {
            return Err(Error::Dimension(format!(
                "horizon, nx and nu must be positive (got N={horizon}, nx={nx}, nu={nu})"
            )));
        }
        if nc > nu {
            return Err(Error::Dimension(format!("nc={nc} exceeds nu={nu}")));
        }
        Ok(Self { horizon, nx, nu, nc })
    }
}

/// Value, gradient and Hessian blocks of a scalar stage function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarDerivs {
    pub value: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub xx: DMatrix<f64>,
    /// `∂²/∂u∂x`, shape `nu × nx`.
    pub ux: DMatrix<f64>,
    pub uu: DMatrix<f64>,
}

/// Second-derivative tensors of a vector-valued stage function, one slice per output.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDerivs {
    pub xx: Tensor3,
    pub ux: Tensor3,
    pub uu: Tensor3,
}

/// Value and Jacobians of a vector-valued stage function.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDerivs {
    pub value: DVector<f64>,
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// `None` means the model does not supply curvature for this function.
    pub second: Option<SecondDerivs>,
}

/// A discrete-time optimal control problem.
///
/// Stages are indexed `0..horizon`. The dynamics are only evaluated for
/// `t < horizon - 1`; the last stage carries cost and constraints only.
/// All callbacks must be pure.
pub trait OcpModel: Send + Sync {
    fn dims(&self) -> Dims;

    fn initial_state(&self) -> DVector<f64>;

    /// Controls constrained to `u ≥ 0`. Empty means an equality-only problem.
    fn nonneg_mask(&self) -> Vec<bool> {
        Vec::new()
    }

    fn cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64;

    fn dynamics(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn constraints(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn cost_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> ScalarDerivs;

    /// Jacobians of `f`; `second: None` selects Gauss-Newton treatment of the dynamics.
    fn dynamics_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> VectorDerivs;

    /// Jacobians of `c`; `second: None` means `c` is affine.
    fn constraint_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>)
        -> VectorDerivs;
}

/// Mask of bound-constrained controls, always of length `nu`.
pub fn control_mask(model: &dyn OcpModel) -> Vec<bool> {
    let nu = model.dims().nu;
    let mask = model.nonneg_mask();
    if mask.is_empty() {
        vec![false; nu]
    } else {
        assert_eq!(mask.len(), nu, "nonneg_mask must be empty or have nu entries");
        mask
    }
}

pub fn has_bounds(model: &dyn OcpModel) -> bool {
    model.nonneg_mask().iter().any(|&b| b)
}

/// Equality mode, or a barrier subproblem with parameter `mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Equality,
    Barrier { mu: f64 },
}

impl Mode {
    pub fn mu(&self) -> f64 {
        match self {
            Mode::Equality => 0.0,
            Mode::Barrier { mu } => *mu,
        }
    }
}

/// Full primal-dual state of the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub phi: Vec<DVector<f64>>,
    pub lambda: Vec<DVector<f64>>,
    /// Bound duals; zero on components outside the mask.
    pub z: Vec<DVector<f64>>,
    pub theta: f64,
    pub lagrangian: f64,
}

impl Iterate {
    /// Rolls `controls` out from the initial state. Duals start at zero and the
    /// cached `theta` / `lagrangian` are evaluated with `mu = 0`.
    pub fn from_controls(model: &dyn OcpModel, controls: &[DVector<f64>]) -> Result<Self> {
        let d = model.dims();
        if controls.len() != d.horizon || controls.iter().any(|u| u.len() != d.nu) {
            return Err(Error::Dimension(format!(
                "expected {} controls of length {}",
                d.horizon, d.nu
            )));
        }
        let x = rollout_states(model, controls);
        let phi = vec![DVector::zeros(d.nc); d.horizon];
        let mut it = Self {
            x,
            u: controls.to_vec(),
            phi,
            lambda: vec![DVector::zeros(d.nx); d.horizon],
            z: vec![DVector::zeros(d.nu); d.horizon],
            theta: 0.0,
            lagrangian: 0.0,
        };
        it.theta = evaluate_theta(model, &it.x, &it.u)?;
        it.lagrangian = evaluate_lagrangian(model, &it.x, &it.u, &it.phi, 0.0)?;
        Ok(it)
    }

    pub fn horizon(&self) -> usize {
        self.x.len()
    }

    pub fn refresh_merit(&mut self, model: &dyn OcpModel, mu: f64) -> Result<()> {
        self.theta = evaluate_theta(model, &self.x, &self.u)?;
        self.lagrangian = evaluate_lagrangian(model, &self.x, &self.u, &self.phi, mu)?;
        Ok(())
    }
}

/// States generated by applying `controls` open loop from `x̂₁`.
pub fn rollout_states(model: &dyn OcpModel, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = controls.len();
    let mut x = Vec::with_capacity(n);
    x.push(model.initial_state());
    for t in 0..n.saturating_sub(1) {
        let next = model.dynamics(t, &x[t], &controls[t]);
        x.push(next);
    }
    x
}

fn check_traj(model: &dyn OcpModel, x: &[DVector<f64>], u: &[DVector<f64>]) -> Result<()> {
    let d = model.dims();
    if x.len() != d.horizon || u.len() != d.horizon {
        return Err(Error::Dimension(format!(
            "trajectories have {} states and {} controls, horizon is {}",
            x.len(),
            u.len(),
            d.horizon
        )));
    }
    if x.iter().any(|v| v.len() != d.nx) || u.iter().any(|v| v.len() != d.nu) {
        return Err(Error::Dimension("state or control has wrong length".into()));
    }
    Ok(())
}

/// `θ = Σ_t ‖c(x_t, u_t)‖₁`
pub fn evaluate_theta(model: &dyn OcpModel, x: &[DVector<f64>], u: &[DVector<f64>]) -> Result<f64> {
    check_traj(model, x, u)?;
    Ok(x.iter()
        .zip(u)
        .enumerate()
        .map(|(t, (xt, ut))| model.constraints(t, xt, ut).lp_norm(1))
        .sum())
}

/// `Σ_t [ℓ − μ Σ_{i∈mask} ln u_t⁽ⁱ⁾ + φ_tᵀ c]`
pub fn evaluate_lagrangian(
    model: &dyn OcpModel,
    x: &[DVector<f64>],
    u: &[DVector<f64>],
    phi: &[DVector<f64>],
    mu: f64,
) -> Result<f64> {
    check_traj(model, x, u)?;
    let mask = control_mask(model);
    let mut total = 0.0;
    for t in 0..x.len() {
        total += model.cost(t, &x[t], &u[t]);
        if mu > 0.0 {
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    let v = u[t][i];
                    if v <= 0.0 {
                        return Err(Error::Domain { stage: t, index: i, value: v });
                    }
                    total -= mu * v.ln();
                }
            }
        }
        if !phi[t].is_empty() {
            total += phi[t].dot(&model.constraints(t, &x[t], &u[t]));
        }
    }
    Ok(total)
}

/// Everything the backward pass needs at one stage, with `L = ℓ + φᵀc` assembled.
#[derive(Debug, Clone)]
pub struct StageDerivatives {
    pub cost: ScalarDerivs,
    pub constraints: VectorDerivs,
    /// Absent at the last stage.
    pub dynamics: Option<VectorDerivs>,
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub lux: DMatrix<f64>,
    pub luu: DMatrix<f64>,
}

impl StageDerivatives {
    pub fn evaluate(
        model: &dyn OcpModel,
        t: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        phi: &DVector<f64>,
    ) -> Result<Self> {
        let d = model.dims();
        let cost = model.cost_derivatives(t, x, u);
        let constraints = model.constraint_derivatives(t, x, u);
        let dynamics =
            if t + 1 < d.horizon { Some(model.dynamics_derivatives(t, x, u)) } else { None };

        let lx = &cost.x + constraints.x.tr_mul(phi);
        let lu = &cost.u + constraints.u.tr_mul(phi);
        let (mut lxx, mut lux, mut luu) = (cost.xx.clone(), cost.ux.clone(), cost.uu.clone());
        if let Some(sec) = &constraints.second {
            if d.nc > 0 {
                lxx += contract_first(phi, &sec.xx)?;
                lux += contract_first(phi, &sec.ux)?;
                luu += contract_first(phi, &sec.uu)?;
            }
        }
        let lxx = (&lxx + lxx.transpose()) * 0.5;
        let luu = (&luu + luu.transpose()) * 0.5;
        Ok(Self { cost, constraints, dynamics, lx, lu, lxx, lux, luu })
    }
}

/// Residual families of the first-order optimality conditions, per stage.
#[derive(Debug, Clone)]
pub struct KktResiduals {
    /// `∇_{u_t} 𝓛 = L_u + f_uᵀ λ_{t+1} − z_t`
    pub grad_u: Vec<DVector<f64>>,
    /// `∇_{x_t} 𝓛 = L_x − λ_t + f_xᵀ λ_{t+1}`
    pub grad_x: Vec<DVector<f64>>,
    pub constraints: Vec<DVector<f64>>,
    /// `x̂₁ − x₁` at t = 0 and `f(x_{t−1}, u_{t−1}) − x_t` afterwards.
    pub dynamics_gap: Vec<DVector<f64>>,
}

impl KktResiduals {
    pub fn max_abs(&self) -> f64 {
        [&self.grad_u, &self.grad_x, &self.constraints, &self.dynamics_gap]
            .iter()
            .flat_map(|fam| fam.iter())
            .map(|v| v.amax())
            .fold(0.0, f64::max)
    }
}

pub fn kkt_residuals(model: &dyn OcpModel, it: &Iterate) -> Result<KktResiduals> {
    let d = model.dims();
    check_traj(model, &it.x, &it.u)?;
    let mask = control_mask(model);
    let n = d.horizon;
    let mut out = KktResiduals {
        grad_u: Vec::with_capacity(n),
        grad_x: Vec::with_capacity(n),
        constraints: Vec::with_capacity(n),
        dynamics_gap: Vec::with_capacity(n),
    };
    for t in 0..n {
        let sd = StageDerivatives::evaluate(model, t, &it.x[t], &it.u[t], &it.phi[t])?;
        let mut gu = sd.lu.clone();
        let mut gx = &sd.lx - &it.lambda[t];
        if let Some(dy) = &sd.dynamics {
            gu += dy.u.tr_mul(&it.lambda[t + 1]);
            gx += dy.x.tr_mul(&it.lambda[t + 1]);
        }
        for (i, &m) in mask.iter().enumerate() {
            if m {
                gu[i] -= it.z[t][i];
            }
        }
        out.grad_u.push(gu);
        out.grad_x.push(gx);
        out.constraints.push(sd.constraints.value.clone());
        let gap = if t == 0 {
            model.initial_state() - &it.x[0]
        } else {
            model.dynamics(t - 1, &it.x[t - 1], &it.u[t - 1]) - &it.x[t]
        };
        out.dynamics_gap.push(gap);
    }
    Ok(out)
}

/// The full Lagrangian including the dynamics multipliers and, on masked
/// controls, the bound term `−zᵀu`.
pub fn lagrangian_with_duals(model: &dyn OcpModel, it: &Iterate) -> Result<f64> {
    check_traj(model, &it.x, &it.u)?;
    let mask = control_mask(model);
    let n = it.horizon();
    let mut total = it.lambda[0].dot(&(model.initial_state() - &it.x[0]));
    for t in 0..n {
        total += model.cost(t, &it.x[t], &it.u[t]);
        total += it.phi[t].dot(&model.constraints(t, &it.x[t], &it.u[t]));
        if t + 1 < n {
            let gap = model.dynamics(t, &it.x[t], &it.u[t]) - &it.x[t + 1];
            total += it.lambda[t + 1].dot(&gap);
        }
        for (i, &m) in mask.iter().enumerate() {
            if m {
                total -= it.z[t][i] * it.u[t][i];
            }
        }
    }
    Ok(total)
}

/// Maximum relative errors between supplied derivatives and central differences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DerivativeReport {
    pub cost_gradient: f64,
    pub cost_hessian: f64,
    pub dynamics_jacobian: f64,
    pub dynamics_hessian: f64,
    pub constraint_jacobian: f64,
    pub constraint_hessian: f64,
    pub lagrangian_gradient: f64,
}

impl DerivativeReport {
    pub fn max(&self) -> f64 {
        [
            self.cost_gradient,
            self.cost_hessian,
            self.dynamics_jacobian,
            self.dynamics_hessian,
            self.constraint_jacobian,
            self.constraint_hessian,
            self.lagrangian_gradient,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn merge(&mut self, o: &DerivativeReport) {
        self.cost_gradient = self.cost_gradient.max(o.cost_gradient);
        self.cost_hessian = self.cost_hessian.max(o.cost_hessian);
        self.dynamics_jacobian = self.dynamics_jacobian.max(o.dynamics_jacobian);
        self.dynamics_hessian = self.dynamics_hessian.max(o.dynamics_hessian);
        self.constraint_jacobian = self.constraint_jacobian.max(o.constraint_jacobian);
        self.constraint_hessian = self.constraint_hessian.max(o.constraint_hessian);
        self.lagrangian_gradient = self.lagrangian_gradient.max(o.lagrangian_gradient);
    }
}

fn rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / analytic.abs().max(1.0)
}

/// Gradient entries are compared against the scale of the whole gradient:
/// the rounding error of a differenced scalar grows with its largest slope,
/// not with the entry being checked.
fn grad_err(fd: f64, analytic: f64, scale: f64) -> f64 {
    (fd - analytic).abs() / analytic.abs().max(scale).max(1.0)
}

/// Perturbs coordinate `k` of the stacked vector `(x, u)`.
fn bump(x: &DVector<f64>, u: &DVector<f64>, k: usize, h: f64) -> (DVector<f64>, DVector<f64>) {
    let (mut x, mut u) = (x.clone(), u.clone());
    if k < x.len() {
        x[k] += h;
    } else {
        u[k - x.len()] += h;
    }
    (x, u)
}

/// Column `k` of `[J_x J_u]`.
fn jac_col(j: &VectorDerivs, k: usize, nx: usize) -> DVector<f64> {
    if k < nx {
        j.x.column(k).into_owned()
    } else {
        j.u.column(k - nx).into_owned()
    }
}

/// Full `(nx+nu)²` Hessian of output `i` assembled from the blocks.
fn tensor_block(s: &SecondDerivs, i: usize, nx: usize, nu: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(nx + nu, nx + nu);
    h.view_mut((0, 0), (nx, nx)).copy_from(&s.xx.slices[i]);
    h.view_mut((nx, 0), (nu, nx)).copy_from(&s.ux.slices[i]);
    h.view_mut((0, nx), (nx, nu)).copy_from(&s.ux.slices[i].transpose());
    h.view_mut((nx, nx), (nu, nu)).copy_from(&s.uu.slices[i]);
    h
}

fn scalar_hess(s: &ScalarDerivs, nx: usize, nu: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(nx + nu, nx + nu);
    h.view_mut((0, 0), (nx, nx)).copy_from(&s.xx);
    h.view_mut((nx, 0), (nu, nx)).copy_from(&s.ux);
    h.view_mut((0, nx), (nx, nu)).copy_from(&s.ux.transpose());
    h.view_mut((nx, nx), (nu, nu)).copy_from(&s.uu);
    h
}

fn check_vector_fn(
    eval: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    deriv: impl Fn(&DVector<f64>, &DVector<f64>) -> VectorDerivs,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> (f64, f64) {
    let (nx, nu) = (x.len(), u.len());
    let base = deriv(x, u);
    let (mut jac_err, mut hess_err) = (0.0_f64, 0.0_f64);
    for k in 0..nx + nu {
        let (xp, up) = bump(x, u, k, h);
        let (xm, um) = bump(x, u, k, -h);
        let fd = (eval(&xp, &up) - eval(&xm, &um)) / (2.0 * h);
        let an = jac_col(&base, k, nx);
        for i in 0..fd.len() {
            jac_err = jac_err.max(rel_err(fd[i], an[i]));
        }
        let (dp, dm) = (deriv(&xp, &up), deriv(&xm, &um));
        for i in 0..base.value.len() {
            let hess = match &base.second {
                Some(s) => tensor_block(s, i, nx, nu),
                None => DMatrix::zeros(nx + nu, nx + nu),
            };
            // column k of the Hessian of output i from differenced Jacobian rows
            for j in 0..nx + nu {
                let gp = if j < nx { dp.x[(i, j)] } else { dp.u[(i, j - nx)] };
                let gm = if j < nx { dm.x[(i, j)] } else { dm.u[(i, j - nx)] };
                hess_err = hess_err.max(rel_err((gp - gm) / (2.0 * h), hess[(j, k)]));
            }
        }
    }
    (jac_err, hess_err)
}

/// Compares analytic derivatives against central differences with step `h` at
/// every stage of the supplied trajectory.
pub fn derivative_check(
    model: &dyn OcpModel,
    x: &[DVector<f64>],
    u: &[DVector<f64>],
    phi: &[DVector<f64>],
    h: f64,
) -> Result<DerivativeReport> {
    check_traj(model, x, u)?;
    assert!(h > 0.0, "finite-difference step must be positive");
    let d = model.dims();
    let (nx, nu) = (d.nx, d.nu);
    let mut report = DerivativeReport::default();
    for t in 0..d.horizon {
        let (xt, ut) = (&x[t], &u[t]);
        let mut r = DerivativeReport::default();

        let c0 = model.cost_derivatives(t, xt, ut);
        let ch = scalar_hess(&c0, nx, nu);
        let c_scale = c0.x.amax().max(c0.u.amax());
        for k in 0..nx + nu {
            let (xp, up) = bump(xt, ut, k, h);
            let (xm, um) = bump(xt, ut, k, -h);
            let fd = (model.cost(t, &xp, &up) - model.cost(t, &xm, &um)) / (2.0 * h);
            let an = if k < nx { c0.x[k] } else { c0.u[k - nx] };
            r.cost_gradient = r.cost_gradient.max(grad_err(fd, an, c_scale));
            let (gp, gm) = (model.cost_derivatives(t, &xp, &up), model.cost_derivatives(t, &xm, &um));
            for j in 0..nx + nu {
                let a = if j < nx { gp.x[j] } else { gp.u[j - nx] };
                let b = if j < nx { gm.x[j] } else { gm.u[j - nx] };
                r.cost_hessian = r.cost_hessian.max(rel_err((a - b) / (2.0 * h), ch[(j, k)]));
            }
        }

        let (cj, chs) = check_vector_fn(
            |a, b| model.constraints(t, a, b),
            |a, b| model.constraint_derivatives(t, a, b),
            xt,
            ut,
            h,
        );
        r.constraint_jacobian = cj;
        r.constraint_hessian = chs;

        if t + 1 < d.horizon {
            let has_second = model.dynamics_derivatives(t, xt, ut).second.is_some();
            let (dj, dh) = check_vector_fn(
                |a, b| model.dynamics(t, a, b),
                |a, b| model.dynamics_derivatives(t, a, b),
                xt,
                ut,
                h,
            );
            r.dynamics_jacobian = dj;
            r.dynamics_hessian = if has_second { dh } else { 0.0 };
        }

        let sd = StageDerivatives::evaluate(model, t, xt, ut, &phi[t])?;
        let stage_l = |a: &DVector<f64>, b: &DVector<f64>| {
            model.cost(t, a, b) + phi[t].dot(&model.constraints(t, a, b))
        };
        let l_scale = sd.lx.amax().max(sd.lu.amax());
        for k in 0..nx + nu {
            let (xp, up) = bump(xt, ut, k, h);
            let (xm, um) = bump(xt, ut, k, -h);
            let fd = (stage_l(&xp, &up) - stage_l(&xm, &um)) / (2.0 * h);
            let an = if k < nx { sd.lx[k] } else { sd.lu[k - nx] };
            r.lagrangian_gradient = r.lagrangian_gradient.max(grad_err(fd, an, l_scale));
        }
        report.merge(&r);
    }
    Ok(report)
}
