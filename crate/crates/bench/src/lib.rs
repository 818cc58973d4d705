//! Fixtures shared by the criterion benches.

use nalgebra::DMatrix;

use filterddp::problems::{default_spec, instantiate, Instance};
use filterddp::solver::initial_iterate;
use filterddp::Iterate;

/// Symmetric quasi-definite `[[H, A], [Aᵀ, 0]]` with a deterministic fill.
pub fn stage_kkt(nu: usize, nc: usize) -> DMatrix<f64> {
    let n = nu + nc;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..nu {
        for j in 0..nu {
            k[(i, j)] = ((i * 7 + j * 3) % 5) as f64 * 0.1 + if i == j { nu as f64 } else { 0.0 };
        }
    }
    let k_sym = (&k + k.transpose()) * 0.5;
    let mut k = k_sym;
    for i in 0..nu {
        for j in 0..nc {
            let v = ((i + 2 * j) % 3) as f64 - 1.0 + if i == j { 1.5 } else { 0.0 };
            k[(i, nu + j)] = v;
            k[(nu + j, i)] = v;
        }
    }
    k
}

/// A named benchmark instance together with its starting iterate.
pub fn instance_with_start(name: &str) -> (Instance, Iterate) {
    let inst = instantiate(&default_spec(name).expect("registered problem")).expect("instance builds");
    let it = initial_iterate(inst.model.as_ref(), &inst.u_init).expect("start rolls out");
    (inst, it)
}
