//! Backward pass: Q-function expansion, regularized stage Newton step and the
//! value / multiplier recursions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{contract_first, ldlt_factor, ldlt_solve, Inertia, SymIndefFactor};
use crate::model::{control_mask, Iterate, Mode, OcpModel, StageDerivatives};

/// Derivatives of the stage Q-function at the current iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct StageQ {
    /// `Q̄_u = L̄_u + f̄_uᵀ V̄_x'`
    pub qu: DVector<f64>,
    /// `Q̂_u = Q̄_u − μ U⁻¹ e` on masked components; equals `qu` in equality mode.
    pub qu_hat: DVector<f64>,
    pub qx: DVector<f64>,
    pub h: DMatrix<f64>,
    /// `nu × nx`
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// `A = c̄_uᵀ`, `nu × nc`
    pub a: DMatrix<f64>,
    pub cbar: DVector<f64>,
    pub cbar_x: DMatrix<f64>,
    /// Diagonal of `Σ = U⁻¹ Z`, zero outside the mask.
    pub sigma: DVector<f64>,
    pub mu: f64,
    pub u: DVector<f64>,
    pub z: DVector<f64>,
    pub mask: Vec<bool>,
}

/// First and (perturbed) second derivatives of the value function and the
/// dynamics multiplier at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueState {
    pub vx: DVector<f64>,
    pub vxx: DMatrix<f64>,
    pub lambda: DVector<f64>,
}

impl ValueState {
    /// Boundary values past the last stage.
    pub fn boundary(nx: usize) -> Self {
        Self { vx: DVector::zeros(nx), vxx: DMatrix::zeros(nx, nx), lambda: DVector::zeros(nx) }
    }
}

/// Feedforward and feedback terms of the update rule at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGains {
    pub alpha: DVector<f64>,
    pub beta: DMatrix<f64>,
    pub psi: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub chi: DVector<f64>,
    pub zeta: DMatrix<f64>,
}

impl StageGains {
    pub fn zeros(nx: usize, nu: usize, nc: usize) -> Self {
        Self {
            alpha: DVector::zeros(nu),
            beta: DMatrix::zeros(nu, nx),
            psi: DVector::zeros(nc),
            omega: DMatrix::zeros(nc, nx),
            chi: DVector::zeros(nu),
            zeta: DMatrix::zeros(nu, nx),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GainsTrajectory {
    pub stages: Vec<StageGains>,
}

impl GainsTrajectory {
    /// `max_t max(‖α_t‖_∞, ‖ψ_t‖_∞)`
    pub fn max_feedforward(&self) -> f64 {
        self.stages
            .iter()
            .map(|g| g.alpha.amax().max(if g.psi.is_empty() { 0.0 } else { g.psi.amax() }))
            .fold(0.0, f64::max)
    }
}

/// Inertia-correction state carried across stages and iterations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegState {
    pub delta_w: f64,
    pub delta_w_last: f64,
    pub delta_c: f64,
}

/// Constants of the inertia-correction schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegParams {
    pub delta_w_init: f64,
    pub delta_w_min: f64,
    pub delta_w_max: f64,
    pub kappa_w_plus: f64,
    pub kappa_w_minus: f64,
    pub delta_c_bar: f64,
    pub kappa_c: f64,
    pub zero_pivot_tol: f64,
    pub max_condition: f64,
    /// Used in place of `μ` in the `δ_c` rule outside barrier mode.
    pub eps_tol: f64,
}

impl Default for RegParams {
    fn default() -> Self {
        Self {
            delta_w_init: 1e-4,
            delta_w_min: 1e-20,
            delta_w_max: 1e40,
            kappa_w_plus: 8.0,
            kappa_w_minus: 1.0 / 3.0,
            delta_c_bar: 1e-8,
            kappa_c: 0.25,
            zero_pivot_tol: crate::linalg::DEFAULT_ZERO_PIVOT_TOL,
            max_condition: 1e14,
            eps_tol: 1e-7,
        }
    }
}

/// Builds `Q̄_u, Q̄_x, H, B, C` at one stage. In Gauss-Newton mode the
/// `λ'·f_{··}` curvature terms are dropped.
pub fn assemble_stage_q(
    sd: &StageDerivatives,
    next: &ValueState,
    mode: Mode,
    mask: &[bool],
    u: &DVector<f64>,
    z: &DVector<f64>,
    gauss_newton: bool,
) -> Result<StageQ> {
    let mut qu = sd.lu.clone();
    let mut qx = sd.lx.clone();
    let mut h = sd.luu.clone();
    let mut b = sd.lux.clone();
    let mut c = sd.lxx.clone();
    if let Some(dy) = &sd.dynamics {
        let (fx, fu) = (&dy.x, &dy.u);
        qu += fu.tr_mul(&next.vx);
        qx += fx.tr_mul(&next.vx);
        let vfu = &next.vxx * fu;
        let vfx = &next.vxx * fx;
        h += fu.tr_mul(&vfu);
        b += fu.tr_mul(&vfx);
        c += fx.tr_mul(&vfx);
        if let (Some(sec), false) = (&dy.second, gauss_newton) {
            h += contract_first(&next.lambda, &sec.uu)?;
            b += contract_first(&next.lambda, &sec.ux)?;
            c += contract_first(&next.lambda, &sec.xx)?;
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let c = (&c + c.transpose()) * 0.5;

    let mu = mode.mu();
    let nu = qu.len();
    let mut qu_hat = qu.clone();
    let mut sigma = DVector::zeros(nu);
    if let Mode::Barrier { mu } = mode {
        for i in 0..nu {
            if mask[i] {
                qu_hat[i] -= mu / u[i];
                sigma[i] = z[i] / u[i];
            }
        }
    }
    Ok(StageQ {
        qu,
        qu_hat,
        qx,
        h,
        b,
        c,
        a: sd.constraints.u.transpose(),
        cbar: sd.constraints.value.clone(),
        cbar_x: sd.constraints.x.clone(),
        sigma,
        mu,
        u: u.clone(),
        z: z.clone(),
        mask: mask.to_vec(),
    })
}

fn kkt_matrix(q: &StageQ, delta_w: f64, delta_c: f64) -> DMatrix<f64> {
    let (nu, nc) = (q.h.nrows(), q.a.ncols());
    let mut k = DMatrix::zeros(nu + nc, nu + nc);
    let mut top = q.h.clone();
    for i in 0..nu {
        top[(i, i)] += q.sigma[i] + delta_w;
    }
    k.view_mut((0, 0), (nu, nu)).copy_from(&top);
    k.view_mut((0, nu), (nu, nc)).copy_from(&q.a);
    k.view_mut((nu, 0), (nc, nu)).copy_from(&q.a.transpose());
    for i in 0..nc {
        k[(nu + i, nu + i)] = -delta_c;
    }
    k
}

/// Symmetric diagonal scaling `D` with `D K D` roughly unit in every row.
fn equilibrate(k: &DMatrix<f64>) -> DVector<f64> {
    let n = k.nrows();
    let mut d = DVector::from_element(n, 1.0);
    for _ in 0..8 {
        let mut done = true;
        for i in 0..n {
            let r = (0..n).map(|j| (d[i] * k[(i, j)] * d[j]).abs()).fold(0.0, f64::max);
            if r > 0.0 && r.is_finite() {
                d[i] /= r.sqrt();
                done &= (r - 1.0).abs() < 1e-2;
            }
        }
        if done {
            break;
        }
    }
    d
}

/// A factorization of `D K D`; the inertia equals that of `K`.
#[derive(Debug, Clone)]
pub struct ScaledFactor {
    pub factor: SymIndefFactor,
    pub scale: DVector<f64>,
}

impl ScaledFactor {
    fn new(k: &DMatrix<f64>, tol: f64) -> Result<Self> {
        let scale = equilibrate(k);
        let mut s = k.clone();
        for i in 0..s.nrows() {
            for j in 0..s.ncols() {
                s[(i, j)] *= scale[i] * scale[j];
            }
        }
        Ok(Self { factor: ldlt_factor(&s, tol)?, scale })
    }

    pub fn inertia(&self) -> Inertia {
        self.factor.inertia()
    }

    pub fn condition_estimate(&self) -> f64 {
        self.factor.condition_estimate()
    }

    /// Solves `K X = R`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut r = rhs.clone();
        for (i, mut row) in r.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        let mut x = ldlt_solve(&self.factor, &r)?;
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        Ok(x)
    }
}

/// Regularizes `K` until its inertia is `(nu, nc, 0)`.
///
/// The unregularized matrix is tried first. When that fails, `δ_c` is switched
/// on if zero eigenvalues were seen and `δ_w` is grown geometrically from
/// `max(δ_w_min, κ₋ δ_w_last)` (or `δ_w_init` when no correction has happened yet).
pub fn inertia_correct(
    q: &StageQ,
    reg: RegState,
    params: &RegParams,
    stage: usize,
) -> Result<(ScaledFactor, RegState)> {
    let (nu, nc) = (q.h.nrows(), q.a.ncols());
    let target = Inertia::new(nu, nc, 0);
    let mut reg = RegState { delta_w: 0.0, delta_c: 0.0, ..reg };

    let f = ScaledFactor::new(&kkt_matrix(q, 0.0, 0.0), params.zero_pivot_tol)?;
    if f.inertia() == target {
        return Ok((f, reg));
    }
    if f.inertia().zero > 0 {
        let mu = if q.mu > 0.0 { q.mu } else { params.eps_tol };
        reg.delta_c = params.delta_c_bar * mu.max(params.eps_tol).powf(params.kappa_c);
    }
    let mut dw = if reg.delta_w_last == 0.0 {
        params.delta_w_init
    } else {
        params.delta_w_min.max(params.kappa_w_minus * reg.delta_w_last)
    };
    loop {
        if dw > params.delta_w_max {
            return Err(Error::RegularizationOverflow { stage });
        }
        let f = ScaledFactor::new(&kkt_matrix(q, dw, reg.delta_c), params.zero_pivot_tol)?;
        if f.inertia().zero > 0 && reg.delta_c == 0.0 {
            let mu = if q.mu > 0.0 { q.mu } else { params.eps_tol };
            reg.delta_c = params.delta_c_bar * mu.max(params.eps_tol).powf(params.kappa_c);
            continue;
        }
        if f.inertia() == target {
            reg.delta_w = dw;
            reg.delta_w_last = dw;
            return Ok((f, reg));
        }
        dw *= params.kappa_w_plus;
    }
}

/// Solves the regularized stage system for the gains.
pub fn solve_stage_kkt(
    q: &StageQ,
    reg: RegState,
    params: &RegParams,
    stage: usize,
) -> Result<(StageGains, RegState)> {
    let (nu, nc, nx) = (q.h.nrows(), q.a.ncols(), q.qx.len());
    let (factor, reg) = inertia_correct(q, reg, params, stage)?;
    if factor.condition_estimate() > params.max_condition {
        return Err(Error::IllConditioned { stage, estimate: factor.condition_estimate() });
    }
    let mut rhs = DMatrix::zeros(nu + nc, 1 + nx);
    rhs.view_mut((0, 0), (nu, 1)).copy_from(&q.qu_hat);
    rhs.view_mut((0, 1), (nu, nx)).copy_from(&q.b);
    rhs.view_mut((nu, 0), (nc, 1)).copy_from(&q.cbar);
    rhs.view_mut((nu, 1), (nc, nx)).copy_from(&q.cbar_x);
    let sol = -factor.solve(&rhs)?;

    let alpha = sol.view((0, 0), (nu, 1)).column(0).into_owned();
    let beta = sol.view((0, 1), (nu, nx)).into_owned();
    let psi = sol.view((nu, 0), (nc, 1)).column(0).into_owned();
    let omega = sol.view((nu, 1), (nc, nx)).into_owned();
    let mut chi = DVector::zeros(nu);
    let mut zeta = DMatrix::zeros(nu, nx);
    if q.mu > 0.0 {
        for i in 0..nu {
            if q.mask[i] {
                chi[i] = q.mu / q.u[i] - q.z[i] - q.sigma[i] * alpha[i];
                for j in 0..nx {
                    zeta[(i, j)] = -q.sigma[i] * beta[(i, j)];
                }
            }
        }
    }
    Ok((StageGains { alpha, beta, psi, omega, chi, zeta }, reg))
}

/// Value-function and multiplier recursion.
///
/// `V̄_x = Q̄_x + βᵀ Q̂_u + ωᵀ c̄`, `λ = L̄_x + f̄_xᵀ λ'` and
/// `V̂_xx = C + βᵀ (H + Σ) β + Bᵀβ + βᵀB`.
pub fn update_value(
    q: &StageQ,
    gains: &StageGains,
    sd: &StageDerivatives,
    next: &ValueState,
) -> ValueState {
    let vx = &q.qx + gains.beta.tr_mul(&q.qu_hat) + gains.omega.tr_mul(&q.cbar);
    let mut lambda = sd.lx.clone();
    if let Some(dy) = &sd.dynamics {
        lambda += dy.x.tr_mul(&next.lambda);
    }
    let mut hs = q.h.clone();
    for i in 0..hs.nrows() {
        hs[(i, i)] += q.sigma[i];
    }
    let bt_beta = q.b.tr_mul(&gains.beta);
    let vxx = &q.c + gains.beta.tr_mul(&(&hs * &gains.beta)) + &bt_beta + bt_beta.transpose();
    let vxx = (&vxx + vxx.transpose()) * 0.5;
    ValueState { vx, vxx, lambda }
}

#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub gains: GainsTrajectory,
    /// Predicted directional derivative `Σ_t (Q̂_u α_t + ψ_tᵀ c̄_t)`.
    pub expected_decrease: f64,
    pub reg: RegState,
    /// Largest `δ_w` used at any stage of this pass.
    pub max_delta_w: f64,
    /// `∇_{u_t}𝓛` at the current iterate with the refreshed multipliers.
    pub grad_u: Vec<DVector<f64>>,
}

/// Runs the backward recursion from the last stage to the first and refreshes
/// `it.lambda`.
pub fn backward_pass(
    model: &dyn OcpModel,
    it: &mut Iterate,
    reg: RegState,
    mode: Mode,
    params: &RegParams,
    gauss_newton: bool,
) -> Result<BackwardResult> {
    let d = model.dims();
    let mask = control_mask(model);
    let n = d.horizon;
    let mut next = ValueState::boundary(d.nx);
    let mut reg = reg;
    let mut max_dw: f64 = 0.0;
    let mut m = 0.0;
    let mut gains = vec![StageGains::zeros(d.nx, d.nu, d.nc); n];
    let mut grad_u = vec![DVector::zeros(d.nu); n];
    for t in (0..n).rev() {
        let sd = StageDerivatives::evaluate(model, t, &it.x[t], &it.u[t], &it.phi[t])?;
        let q = assemble_stage_q(&sd, &next, mode, &mask, &it.u[t], &it.z[t], gauss_newton)?;
        let (g, r) = solve_stage_kkt(&q, reg, params, t)?;
        reg = r;
        max_dw = max_dw.max(reg.delta_w);
        m += q.qu_hat.dot(&g.alpha) + g.psi.dot(&q.cbar);

        let mut gu = sd.lu.clone();
        if let Some(dy) = &sd.dynamics {
            gu += dy.u.tr_mul(&next.lambda);
        }
        for i in 0..d.nu {
            if mask[i] {
                gu[i] -= it.z[t][i];
            }
        }
        grad_u[t] = gu;

        next = update_value(&q, &g, &sd, &next);
        it.lambda[t] = next.lambda.clone();
        gains[t] = g;
    }
    Ok(BackwardResult {
        gains: GainsTrajectory { stages: gains },
        expected_decrease: m,
        reg,
        max_delta_w: max_dw,
        grad_u,
    })
}
