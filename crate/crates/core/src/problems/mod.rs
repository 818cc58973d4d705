//! Benchmark problems and ground-truth oracles.

pub mod acrobot;
pub mod autodiff;
pub mod cartpole;
pub mod eqlq;
pub mod linear;
pub mod oracle;
pub mod pendulum;
pub mod spec;
pub mod variational;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{derivative_check, rollout_states, DerivativeReport, Dims, Iterate, OcpModel, ScalarDerivs, VectorDerivs};

pub use spec::{randomize, BenchmarkSpec};

/// Registered problem names.
pub const PROBLEMS: &[&str] =
    &["eqlq", "pendulum", "pendulum_bounded", "cartpole", "cartpole_friction", "acrobot", "acrobot_contact"];

pub fn eqlq_spec() -> BenchmarkSpec {
    BenchmarkSpec::new("eqlq", 5, 1.0, &[("nx", 2.0), ("nu", 2.0), ("nc", 1.0)])
}

/// Base specification of a registered problem.
pub fn default_spec(name: &str) -> Result<BenchmarkSpec> {
    let mut spec = match name {
        "eqlq" => eqlq_spec(),
        "pendulum" | "pendulum_bounded" => pendulum::pendulum_spec(),
        "cartpole" | "cartpole_friction" => cartpole::cartpole_spec(),
        "acrobot" | "acrobot_contact" => acrobot::acrobot_spec(),
        _ => return Err(Error::Config(format!("unknown problem {name}; expected one of {}", PROBLEMS.join(", ")))),
    };
    spec.name = name.to_string();
    Ok(spec)
}

/// A model together with its default open-loop initial controls.
pub struct Instance {
    pub spec: BenchmarkSpec,
    pub model: Box<dyn OcpModel>,
    pub u_init: Vec<DVector<f64>>,
    /// Whether the model is linear-quadratic, so the stacked oracle applies.
    pub linear_quadratic: bool,
}

fn count(spec: &BenchmarkSpec, key: &str) -> Result<usize> {
    let v = spec.param(key);
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Config(format!("{key} must be a nonnegative integer, got {v}")));
    }
    Ok(v as usize)
}

pub fn instantiate(spec: &BenchmarkSpec) -> Result<Instance> {
    let (model, u_init, lq): (Box<dyn OcpModel>, Vec<DVector<f64>>, bool) = match spec.name.as_str() {
        "eqlq" => {
            let m = eqlq::build_eqlq(spec.seed, spec.horizon, count(spec, "nx")?, count(spec, "nu")?, count(spec, "nc")?)?;
            let u = vec![DVector::zeros(m.dims.nu); spec.horizon];
            (Box::new(m), u, true)
        }
        "pendulum" | "pendulum_bounded" => {
            let m = pendulum::build_pendulum_invdyn(spec, spec.name == "pendulum_bounded");
            let u = m.0.initial_controls();
            (Box::new(m), u, false)
        }
        "cartpole" | "cartpole_friction" => {
            let m = cartpole::build_cartpole(spec, spec.name == "cartpole_friction");
            let u = m.0.initial_controls();
            (Box::new(m), u, false)
        }
        "acrobot" | "acrobot_contact" => {
            let m = acrobot::build_acrobot(spec, spec.name == "acrobot_contact");
            let u = m.0.initial_controls();
            (Box::new(m), u, false)
        }
        other => return Err(Error::Config(format!("unknown problem {other}"))),
    };
    Ok(Instance { spec: spec.clone(), model, u_init, linear_quadratic: lq })
}

/// Runs [`derivative_check`] on `points` seeded random trajectories and returns
/// the report with the largest error. Controls are drawn in `[0.05, 1]` so that
/// masked components stay positive; multipliers in `[-1, 1]`.
pub fn random_derivative_check(model: &dyn OcpModel, seed: u64, points: usize) -> Result<DerivativeReport> {
    let d = model.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = DerivativeReport::default();
    for _ in 0..points {
        let u: Vec<_> = (0..d.horizon).map(|_| DVector::from_fn(d.nu, |_, _| rng.gen_range(0.05..1.0))).collect();
        let phi: Vec<_> = (0..d.horizon).map(|_| DVector::from_fn(d.nc, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let x = rollout_states(model, &u);
        let rep = derivative_check(model, &x, &u, &phi, 1e-5)?;
        if rep.max() >= worst.max() {
            worst = rep;
        }
    }
    Ok(worst)
}

/// Largest componentwise difference between two iterates over `x, u, φ, λ`.
pub fn trajectory_gap(a: &Iterate, b: &Iterate) -> f64 {
    let pairs = [(&a.x, &b.x), (&a.u, &b.u), (&a.phi, &b.phi), (&a.lambda, &b.lambda)];
    pairs
        .iter()
        .flat_map(|(p, q)| p.iter().zip(q.iter()).map(|(v, w)| (v - w).amax()))
        .fold(0.0, f64::max)
}

/// Wraps a model and adds a constant offset to every entry of the reported
/// `∂f/∂u`, leaving function values intact. Used to exercise derivative checks.
pub struct CorruptedDynamics {
    inner: Box<dyn OcpModel>,
    offset: f64,
}

impl CorruptedDynamics {
    pub fn new<M: OcpModel + 'static>(inner: M, offset: f64) -> Self {
        Self { inner: Box::new(inner), offset }
    }

    pub fn boxed(inner: Box<dyn OcpModel>, offset: f64) -> Self {
        Self { inner, offset }
    }
}

impl OcpModel for CorruptedDynamics {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }
    fn initial_state(&self) -> DVector<f64> {
        self.inner.initial_state()
    }
    fn nonneg_mask(&self) -> Vec<bool> {
        self.inner.nonneg_mask()
    }
    fn cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.inner.cost(t, x, u)
    }
    fn dynamics(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.inner.dynamics(t, x, u)
    }
    fn constraints(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.inner.constraints(t, x, u)
    }
    fn cost_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> ScalarDerivs {
        self.inner.cost_derivatives(t, x, u)
    }
    fn dynamics_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> VectorDerivs {
        let mut d = self.inner.dynamics_derivatives(t, x, u);
        d.u.add_scalar_mut(self.offset);
        d
    }
    fn constraint_derivatives(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> VectorDerivs {
        self.inner.constraint_derivatives(t, x, u)
    }
}
