//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use filterddp::backward::{backward_pass, inertia_correct, RegParams, StageQ};
use filterddp::barrier::{complementarity_error, update_mu};
use filterddp::filter::{armijo_holds, augment_filter, filter_blocks, rollout, sufficient_decrease, switching_holds};
use filterddp::problems::acrobot::build_acrobot_contact;
use filterddp::problems::cartpole::build_cartpole_friction;
use filterddp::problems::oracle::stacked_kkt_oracle;
use filterddp::problems::{default_spec, instantiate, random_derivative_check, randomize, trajectory_gap, PROBLEMS};
use filterddp::solver::{fitted_rate, local_rate_probe};
use filterddp::{solve, solve_from, Filter, Inertia, Iterate, Mode, OcpModel, RegState, SolverConfig, Status};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Equality-constrained LQ: ≤ 2 iterations, E < 1e-10, oracle gap ≤ 1e-8, < 1 s total.
fn newton_exactness() -> Outcome {
    let config = SolverConfig { eps_tol: 1e-10, ..SolverConfig::default() };
    let base = default_spec("eqlq").map_err(err)?;
    let (mut worst_gap, mut worst_e, mut max_iters) = (0.0f64, 0.0f64, 0usize);
    let clock = Instant::now();
    for spec in randomize(&base, 20) {
        let inst = instantiate(&spec).map_err(err)?;
        let rep = solve(inst.model.as_ref(), &inst.u_init, &config).map_err(err)?;
        if rep.status != Status::Converged {
            return Err(format!("seed {} ended with {}", spec.seed, rep.status.as_str()));
        }
        let oracle = stacked_kkt_oracle(inst.model.as_ref()).map_err(err)?;
        worst_gap = worst_gap.max(trajectory_gap(&rep.iterate, &oracle));
        worst_e = worst_e.max(rep.records.last().map_or(f64::INFINITY, |r| r.error));
        max_iters = max_iters.max(rep.iterations());
    }
    let elapsed = clock.elapsed().as_secs_f64();
    ensure(
        max_iters <= 2 && worst_e < 1e-10 && worst_gap <= 1e-8 && elapsed < 1.0,
        format!("max iterations {max_iters}, max E {worst_e:.2e}, max gap {worst_gap:.2e}, {elapsed:.3} s"),
    )
}

/// Oracle KKT point is a fixed point: zero feedforward, immediate convergence.
fn fixed_point() -> Outcome {
    let config = SolverConfig::default();
    let (mut worst_ff, mut worst_ls) = (0.0f64, 0usize);
    for spec in randomize(&default_spec("eqlq").map_err(err)?, 5) {
        let inst = instantiate(&spec).map_err(err)?;
        let model = inst.model.as_ref();
        let mut it = stacked_kkt_oracle(model).map_err(err)?;
        it.refresh_merit(model, 0.0).map_err(err)?;
        let params = RegParams { eps_tol: config.eps_tol, ..config.reg };
        let bp = backward_pass(model, &mut it.clone(), RegState::default(), Mode::Equality, &params, false)
            .map_err(err)?;
        worst_ff = worst_ff.max(bp.gains.max_feedforward());
        let rep = solve_from(model, it, &config).map_err(err)?;
        if rep.status != Status::Converged {
            return Err(format!("seed {}: {}", spec.seed, rep.status.as_str()));
        }
        worst_ls = worst_ls.max(rep.iterations());
    }
    ensure(worst_ff <= 1e-8 && worst_ls == 0, format!("max feedforward {worst_ff:.2e}, line searches {worst_ls}"))
}

/// Iterate reached after `k` accepted steps from the default start.
fn iterate_after(model: &dyn OcpModel, u_init: &[DVector<f64>], k: usize) -> Result<Iterate, String> {
    let config = SolverConfig { max_iters: k, ..SolverConfig::default() };
    Ok(solve(model, u_init, &config).map_err(err)?.iterate)
}

/// `m` agrees with a forward difference of 𝓛 along the update rule.
fn directional_derivative() -> Outcome {
    let inst = instantiate(&default_spec("pendulum").map_err(err)?).map_err(err)?;
    let model = inst.model.as_ref();
    let params = RegParams::default();
    let gamma = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..5 {
        let mut it = iterate_after(model, &inst.u_init, k)?;
        it.refresh_merit(model, 0.0).map_err(err)?;
        let bp = backward_pass(model, &mut it, RegState::default(), Mode::Equality, &params, false).map_err(err)?;
        if bp.gains.max_feedforward() == 0.0 {
            return Err(format!("iterate {k} is stationary"));
        }
        let trial = rollout(model, &it, &bp.gains, gamma, Mode::Equality).ok_or("rollout broke down")?;
        let fd = (trial.lagrangian - it.lagrangian) / gamma;
        let m = bp.expected_decrease;
        worst = worst.max((m - fd).abs() / m.abs().max(1.0));
    }
    ensure(worst <= 1e-4, format!("max relative mismatch {worst:.2e}"))
}

/// Fitted contraction exponent near the pendulum solution.
fn quadratic_rate() -> Outcome {
    let inst = instantiate(&default_spec("pendulum").map_err(err)?).map_err(err)?;
    let model = inst.model.as_ref();
    let config = SolverConfig { eps_tol: 1e-10, ..SolverConfig::default() };
    let rep = solve(model, &inst.u_init, &config).map_err(err)?;
    if rep.status != Status::Converged {
        return Err(format!("reference solve: {}", rep.status.as_str()));
    }
    let angle_err = (rep.iterate.u.last().unwrap()[1] - std::f64::consts::PI).abs();
    let samples = local_rate_probe(model, &config, &rep.iterate, &[1e-2, 3e-3, 1e-3], 7).map_err(err)?;
    let slope = fitted_rate(&samples).ok_or("too few valid samples")?;
    ensure(slope >= 1.7 && angle_err < 1e-3, format!("slope {slope:.3}, terminal angle error {angle_err:.1e}"))
}

fn eigen_inertia(k: &DMatrix<f64>) -> Inertia {
    let eig = SymmetricEigen::new(k.clone());
    let tol = 1e-13 * k.amax().max(1.0);
    let mut out = Inertia::default();
    for &l in eig.eigenvalues.iter() {
        if l > tol {
            out.positive += 1;
        } else if l < -tol {
            out.negative += 1;
        } else {
            out.zero += 1;
        }
    }
    out
}

fn random_stage(rng: &mut ChaCha8Rng) -> StageQ {
    let nu = rng.gen_range(1..=5);
    let nc = rng.gen_range(0..=nu);
    let nx = 2;
    let g = DMatrix::from_fn(nu, nu, |_, _| rng.gen_range(-1.0..1.0));
    // Shifted so that a good share of draws is indefinite.
    let shift = rng.gen_range(-1.5..0.5);
    let h = (&g + g.transpose()) * 0.5 + DMatrix::identity(nu, nu) * shift;
    let mut a = DMatrix::from_fn(nu, nc, |_, _| rng.gen_range(-1.0..1.0));
    if nc >= 2 && rng.gen_bool(0.4) {
        // Duplicate a column: rank-deficient constraint Jacobian.
        let c0 = a.column(0).clone_owned();
        a.set_column(nc - 1, &c0);
    }
    StageQ {
        qu: DVector::zeros(nu),
        qu_hat: DVector::zeros(nu),
        qx: DVector::zeros(nx),
        h,
        b: DMatrix::zeros(nu, nx),
        c: DMatrix::zeros(nx, nx),
        a,
        cbar: DVector::zeros(nc),
        cbar_x: DMatrix::zeros(nc, nx),
        sigma: DVector::zeros(nu),
        mu: 0.0,
        u: DVector::zeros(nu),
        z: DVector::zeros(nu),
        mask: vec![false; nu],
    }
}

/// Corrected stage matrices have inertia `(n_u, n_c, 0)` per a dense eigen-solve.
fn inertia_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = RegParams::default();
    let (mut indefinite, mut deficient) = (0, 0);
    for case in 0..100 {
        let q = random_stage(&mut rng);
        let (nu, nc) = (q.h.nrows(), q.a.ncols());
        if eigen_inertia(&q.h).negative > 0 {
            indefinite += 1;
        }
        if nc > 0 && q.a.rank(1e-10) < nc {
            deficient += 1;
        }
        let (factor, reg) = inertia_correct(&q, RegState::default(), &params, 0).map_err(err)?;
        let mut k = DMatrix::zeros(nu + nc, nu + nc);
        k.view_mut((0, 0), (nu, nu)).copy_from(&(&q.h + DMatrix::identity(nu, nu) * reg.delta_w));
        k.view_mut((0, nu), (nu, nc)).copy_from(&q.a);
        k.view_mut((nu, 0), (nc, nu)).copy_from(&q.a.transpose());
        for i in 0..nc {
            k[(nu + i, nu + i)] = -reg.delta_c;
        }
        let target = Inertia::new(nu, nc, 0);
        if factor.inertia() != target || eigen_inertia(&k) != target {
            return Err(format!(
                "case {case}: reported {:?}, eigenvalues {:?}, target {target:?}",
                factor.inertia(),
                eigen_inertia(&k)
            ));
        }
    }
    ensure(
        indefinite > 0 && deficient > 0,
        format!("100/100 systems ({indefinite} indefinite H, {deficient} rank-deficient A)"),
    )
}

fn draw(rng: &mut ChaCha8Rng) -> f64 {
    // A coarse grid half of the time so that ties are exercised.
    if rng.gen_bool(0.5) {
        rng.gen_range(0..5) as f64 * 0.5
    } else {
        rng.gen_range(0.0..2.5)
    }
}

/// Acceptance predicates against direct restatements, 10⁴ draws.
fn filter_logic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut disagreements = 0;
    let draws = 10_000;
    for _ in 0..draws {
        let theta_max = 1.0 + draw(&mut rng);
        let mut filter = Filter::new(theta_max);
        let mut corners = Vec::new();
        for _ in 0..rng.gen_range(0..6) {
            let (t, l) = (draw(&mut rng), draw(&mut rng) - 1.0);
            filter.insert(t, l);
            corners.push((t, l));
        }
        let blocked = |c: &[(f64, f64)], t: f64, l: f64| t >= theta_max || c.iter().any(|&(a, b)| t >= a && l >= b);
        let (tp, lp) = (draw(&mut rng), draw(&mut rng) - 1.0);
        let (tb, lb) = (draw(&mut rng), draw(&mut rng) - 1.0);
        let (gt, gl) = (rng.gen_range(1e-6..0.5), rng.gen_range(1e-6..0.5));
        let m: f64 = rng.gen_range(-3.0..1.0);
        let gamma: f64 = [1.0, 0.5, 0.25, rng.gen_range(1e-3..1.0)][rng.gen_range(0..4)];
        let (delta, s_theta, s_l, eta) = (rng.gen_range(0.1..2.0), rng.gen_range(1.0..1.5), rng.gen_range(1.5..2.5), 1e-4);

        let mut agree = filter_blocks(&filter, tp, lp) == blocked(&corners, tp, lp);
        agree &= sufficient_decrease(tb, lb, tp, lp, gt, gl) == (tp <= (1.0 - gt) * tb || lp <= lb - gl * tb);
        let sw = gamma * m < 0.0 && (-gamma * m).powf(s_l) * gamma.powf(1.0 - s_l) > delta * tb.powf(s_theta);
        agree &= switching_holds(m, gamma, tb, delta, s_theta, s_l) == sw;
        agree &= armijo_holds(lb, lp, m, gamma, eta) == (lp <= lb + eta * gamma * m);

        augment_filter(&mut filter, tb, lb, gt, gl);
        corners.push(((1.0 - gt) * tb, lb - gl * tb));
        for _ in 0..4 {
            let (t, l) = (draw(&mut rng), draw(&mut rng) - 1.0);
            agree &= filter_blocks(&filter, t, l) == blocked(&corners, t, l);
        }
        agree &= filter_blocks(&filter, (1.0 - gt) * tb, lb - gl * tb);
        if !agree {
            disagreements += 1;
        }
    }
    ensure(disagreements == 0, format!("{} / {draws} draws agree", draws - disagreements))
}

/// Torque-limited pendulum through the barrier loop.
fn interior_point() -> Outcome {
    let inst = instantiate(&default_spec("pendulum_bounded").map_err(err)?).map_err(err)?;
    let model = inst.model.as_ref();
    let config = SolverConfig::default();
    let rep = solve(model, &inst.u_init, &config).map_err(err)?;
    if rep.status != Status::Converged {
        return Err(format!("status {}", rep.status.as_str()));
    }
    let e0 = rep.records.last().map_or(f64::INFINITY, |r| r.error);
    let comp = complementarity_error(model, &rep.iterate, 0.0);

    // Every accepted iterate, replayed by truncating the deterministic run.
    let mask = model.nonneg_mask();
    for k in 0..=rep.iterations() {
        let it = iterate_after(model, &inst.u_init, k)?;
        for (u, z) in it.u.iter().zip(&it.z) {
            for (i, &on) in mask.iter().enumerate() {
                if on && !(u[i] > 0.0 && z[i] > 0.0) {
                    return Err(format!("iterate {k}: u = {}, z = {}", u[i], z[i]));
                }
            }
        }
    }

    // μ trace: each change is one or more applications of the update rule
    // (several only at k = 0), starting from μ_init.
    let mus: Vec<f64> = rep.records.iter().map(|r| r.mode.mu()).collect();
    let mut prev = config.mu_init;
    let mut updates = 0;
    for (k, &mu) in mus.iter().enumerate() {
        let mut cur = prev;
        let mut steps = 0;
        while cur != mu && steps < 50 {
            cur = update_mu(cur, config.eps_tol, config.kappa_mu, config.theta_mu);
            steps += 1;
        }
        if cur != mu || (k > 0 && steps > 1) {
            return Err(format!("μ trace breaks at k = {k}: {prev:e} -> {mu:e}"));
        }
        updates += steps;
        prev = mu;
    }
    ensure(
        e0 < 1e-7 && comp <= 1e-7,
        format!(
            "{} iterations, E₀ {e0:.2e}, max z⊙u {comp:.2e}, {updates} μ updates ending at {prev:.1e}",
            rep.iterations()
        ),
    )
}

/// Nominal contact instances: convergence and feasibility.
fn contact_benchmarks() -> Outcome {
    let config = SolverConfig { max_iters: 1000, ..SolverConfig::default() };
    let cart = build_cartpole_friction(&default_spec("cartpole_friction").map_err(err)?);
    let c_rep = solve(&cart, &cart.0.initial_controls(), &config).map_err(err)?;
    let c_e = c_rep.records.last().map_or(f64::INFINITY, |r| r.error);
    let c_comp = cart.0.complementarity_residual(&c_rep.iterate.u);

    let spec = default_spec("acrobot_contact").map_err(err)?;
    let acro = build_acrobot_contact(&spec);
    let a_rep = solve(&acro, &acro.0.initial_controls(), &config).map_err(err)?;
    let a_e = a_rep.records.last().map_or(f64::INFINITY, |r| r.error);
    let a_comp = acro.0.complementarity_residual(&a_rep.iterate.u);
    let a_viol = acro.0.limit_violation(&a_rep.iterate.u, spec.param("joint_limit"));

    let ok = c_rep.status == Status::Converged
        && a_rep.status == Status::Converged
        && c_e < 1e-7
        && a_e < 1e-7
        && c_comp <= 1e-6
        && a_comp <= 1e-6
        && a_viol <= 1e-6;
    ensure(
        ok,
        format!(
            "cartpole_friction {} in {} (E₀ {c_e:.1e}, comp {c_comp:.1e}); acrobot_contact {} in {} (E₀ {a_e:.1e}, comp {a_comp:.1e}, limit violation {a_viol:.1e})",
            c_rep.status.as_str(),
            c_rep.iterations(),
            a_rep.status.as_str(),
            a_rep.iterations()
        ),
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

/// Two identical batch runs write byte-identical files.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_filterddp"))
            .args(["solve", "--problem", "eqlq", "--batch", "10", "--seed", "0", "--out"])
            .arg(&dir)
            .output()
            .map_err(err)?
            .status;
        if !status.success() {
            return Err(format!("run {name} exited with {status}"));
        }
        runs.push(snapshot(&dir));
    }
    ensure(runs[0] == runs[1] && !runs[0].is_empty(), format!("{} files compared", runs[0].len()))
}

/// Derivative check on every benchmark model.
fn derivative_integrity() -> Outcome {
    let mut worst = (0.0f64, "");
    for &name in PROBLEMS {
        let inst = instantiate(&default_spec(name).map_err(err)?).map_err(err)?;
        let rep = random_derivative_check(inst.model.as_ref(), 1, 5).map_err(err)?;
        if rep.max() >= worst.0 {
            worst = (rep.max(), name);
        }
    }
    ensure(worst.0 <= 1e-5, format!("{} models, worst {:.2e} ({})", PROBLEMS.len(), worst.0, worst.1))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("newton exactness on equality-constrained LQ", newton_exactness),
        ("oracle KKT point is a fixed point", fixed_point),
        ("directional derivative identity", directional_derivative),
        ("local quadratic rate", quadratic_rate),
        ("inertia correction", inertia_correctness),
        ("filter logic truth tables", filter_logic),
        ("interior-point path on bounded pendulum", interior_point),
        ("contact benchmarks", contact_benchmarks),
        ("determinism of batch logs", determinism),
        ("derivative integrity", derivative_integrity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
