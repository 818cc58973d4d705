//! Run description assembled from a flat `key=value` config file, `--set`
//! overrides and command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use filterddp::problems::{default_spec, BenchmarkSpec};
use filterddp::SolverConfig;

/// A rejected manifest: unknown key, unparsable value, missing problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestError(pub String);

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ManifestError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ManifestError> {
    Err(ManifestError(msg.into()))
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub problem: String,
    pub spec: BenchmarkSpec,
    pub config: SolverConfig,
    pub batch: usize,
    pub out: PathBuf,
    /// Offset added to the reported `∂f/∂u` (derivative-check fixture).
    pub corrupt_fu: Option<f64>,
}

/// Flag values as given on the command line, before merging.
#[derive(Debug, Clone, Default)]
pub struct RawArgs {
    pub problem: Option<String>,
    pub seed: Option<u64>,
    pub batch: Option<usize>,
    pub out: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
}

/// Maps accepted spellings onto canonical key names.
pub fn canonical_key(key: &str) -> String {
    let k = key.trim();
    let mapped = match k {
        "ε_tol" | "epsilon_tol" | "tol" => "eps_tol",
        "γ_θ" => "gamma_theta",
        "γ_𝓛" | "γ_L" => "gamma_l",
        "δ" => "delta",
        "s_θ" => "s_theta",
        "s_𝓛" | "s_L" => "s_l",
        "η_𝓛" | "η_L" => "eta_l",
        "γ_min" => "gamma_min",
        "θ_max_factor" => "theta_max_factor",
        "θ_min_factor" => "theta_min_factor",
        "μ_init" | "mu0" => "mu_init",
        "κ_ε" => "kappa_eps",
        "κ_μ" => "kappa_mu",
        "θ_μ" => "theta_mu",
        "τ_min" => "tau_min",
        "N" => "horizon",
        other => other,
    };
    mapped.to_string()
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ManifestError> {
    match value.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => err(format!("invalid value `{value}` for key `{key}`: expected a finite number")),
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ManifestError> {
    value.trim().parse().or_else(|_| err(format!("invalid value `{value}` for key `{key}`: expected a nonnegative integer")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ManifestError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => err(format!("invalid value `{value}` for key `{key}`: expected true or false")),
    }
}

/// Applies one solver option; `Ok(false)` if `key` is not a solver option.
fn apply_solver_key(c: &mut SolverConfig, key: &str, value: &str) -> Result<bool, ManifestError> {
    let f = |v: &str| parse_f64(key, v);
    match key {
        "eps_tol" => c.eps_tol = f(value)?,
        "max_iters" => c.max_iters = parse_usize(key, value)?,
        "gamma_theta" => c.gamma_theta = f(value)?,
        "gamma_l" => c.gamma_l = f(value)?,
        "delta" => c.delta = f(value)?,
        "s_theta" => c.s_theta = f(value)?,
        "s_l" => c.s_l = f(value)?,
        "eta_l" => c.eta_l = f(value)?,
        "gamma_min" => c.gamma_min = f(value)?,
        "theta_max_factor" => c.theta_max_factor = f(value)?,
        "theta_min_factor" => c.theta_min_factor = f(value)?,
        "mu_init" => c.mu_init = f(value)?,
        "kappa_eps" => c.kappa_eps = f(value)?,
        "kappa_mu" => c.kappa_mu = f(value)?,
        "theta_mu" => c.theta_mu = f(value)?,
        "tau_min" => c.tau_min = f(value)?,
        "gauss_newton" => c.gauss_newton = parse_bool(key, value)?,
        "delta_w_init" => c.reg.delta_w_init = f(value)?,
        "delta_w_min" => c.reg.delta_w_min = f(value)?,
        "delta_w_max" => c.reg.delta_w_max = f(value)?,
        "kappa_w_plus" => c.reg.kappa_w_plus = f(value)?,
        "kappa_w_minus" => c.reg.kappa_w_minus = f(value)?,
        "delta_c_bar" => c.reg.delta_c_bar = f(value)?,
        "kappa_c" => c.reg.kappa_c = f(value)?,
        "zero_pivot_tol" => c.reg.zero_pivot_tol = f(value)?,
        "max_condition" => c.reg.max_condition = f(value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Parses a flat config file: `key = value` per line, `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ManifestError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => pairs.push((canonical_key(k), v.trim().to_string())),
            _ => return err(format!("config line {}: expected key=value, got `{}`", i + 1, raw.trim())),
        }
    }
    Ok(pairs)
}

fn read_config(path: &Path) -> Result<Vec<(String, String)>, ManifestError> {
    let text = std::fs::read_to_string(path)
        .or_else(|e| err(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
}

impl RunManifest {
    /// Merges config file, `--set` overrides and flags, in that order of precedence
    /// (flags win). `default_out` is used when neither flags nor file name a directory.
    pub fn build(raw: &RawArgs, default_out: &Path) -> Result<Self, ManifestError> {
        let mut pairs = match &raw.config {
            Some(p) => read_config(p)?,
            None => Vec::new(),
        };
        for s in &raw.sets {
            match s.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => pairs.push((canonical_key(k), v.trim().to_string())),
                _ => return err(format!("--set expects key=value, got `{s}`")),
            }
        }

        let mut problem = None;
        let mut batch = 1;
        let mut out = None;
        let mut rest = Vec::new();
        for (k, v) in pairs {
            match k.as_str() {
                "problem" => problem = Some(v),
                "batch" => batch = parse_usize(&k, &v)?,
                "out" => out = Some(PathBuf::from(v)),
                _ => rest.push((k, v)),
            }
        }
        let problem = match raw.problem.clone().or(problem) {
            Some(p) => p,
            None => return err("no problem given: pass --problem or set `problem` in the config file"),
        };
        let mut spec = default_spec(&problem).or_else(|e| err(e.to_string()))?;
        let mut config = SolverConfig::default();
        let mut corrupt_fu = None;
        for (k, v) in rest {
            if apply_solver_key(&mut config, &k, &v)? {
                continue;
            }
            if k == "corrupt_fu" {
                corrupt_fu = Some(parse_f64(&k, &v)?);
                continue;
            }
            let known = matches!(k.as_str(), "horizon" | "dt" | "seed") || spec.params.contains_key(&k);
            if !known {
                return err(format!("unknown key `{k}` for problem {problem}"));
            }
            let value = parse_f64(&k, &v)?;
            spec.set(&k, value).or_else(|_| err(format!("invalid value `{v}` for key `{k}`")))?;
        }
        if let Some(seed) = raw.seed {
            spec.seed = seed;
        }
        let batch = raw.batch.unwrap_or(batch);
        if batch == 0 {
            return err("invalid value `0` for key `batch`: need at least one instance");
        }
        config.validate().or_else(|e| err(e.to_string()))?;
        let out = raw.out.clone().or(out).unwrap_or_else(|| default_out.to_path_buf());
        Ok(Self { problem, spec, config, batch, out, corrupt_fu })
    }
}
