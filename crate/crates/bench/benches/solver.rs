use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use filterddp::backward::{backward_pass, RegParams};
use filterddp::linalg::ldlt_factor;
use filterddp::{solve, Mode, RegState, SolverConfig};
use filterddp_bench::{instance_with_start, stage_kkt};

fn ldlt(c: &mut Criterion) {
    let mut group = c.benchmark_group("ldlt");
    for (nu, nc) in [(3, 2), (7, 6), (15, 14)] {
        let k = stage_kkt(nu, nc);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{nu}x{nc}")), &k, |b, k| {
            b.iter(|| ldlt_factor(black_box(k), 1e-12).unwrap())
        });
    }
    group.finish();
}

fn backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("backward_pass");
    for name in ["pendulum", "cartpole_friction"] {
        let (inst, it) = instance_with_start(name);
        let mode = if inst.model.nonneg_mask().iter().any(|&m| m) { Mode::Barrier { mu: 0.1 } } else { Mode::Equality };
        let params = RegParams::default();
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut it = it.clone();
                backward_pass(inst.model.as_ref(), &mut it, RegState::default(), mode, &params, false).unwrap()
            })
        });
    }
    group.finish();
}

fn full_solve(c: &mut Criterion) {
    let config = SolverConfig::default();
    let mut group = c.benchmark_group("solve");
    for name in ["eqlq", "pendulum"] {
        let (inst, _) = instance_with_start(name);
        group.bench_function(name, |b| b.iter(|| solve(inst.model.as_ref(), &inst.u_init, &config).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, ldlt, backward, full_solve);
criterion_main!(benches);
