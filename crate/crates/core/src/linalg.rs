//! Dense symmetric-indefinite factorization and small tensor helpers.
//!
//! The factorization is `Pᵀ K P = L D Lᵀ` with `D` block diagonal (1×1 and 2×2
//! blocks) chosen by bounded Bunch–Kaufman (rook) pivoting. The inertia of `K`
//! is read off the eigenvalues of the pivot blocks.

use nalgebra::DMatrix;
use nalgebra::DVector;

use crate::error::{Error, Result};

/// Growth-bounding constant of Bunch–Kaufman pivoting, (1 + √17) / 8.
const BK_ALPHA: f64 = 0.640_388_203_202_208_4;

pub const DEFAULT_ZERO_PIVOT_TOL: f64 = 1e-12;

/// Counts of positive, negative and zero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    pub fn new(positive: usize, negative: usize, zero: usize) -> Self {
        Self { positive, negative, zero }
    }

    pub fn dim(&self) -> usize {
        self.positive + self.negative + self.zero
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pivot {
    One(f64),
    /// Symmetric 2×2 block stored as (d11, d21, d22).
    Two(f64, f64, f64),
}

/// Factorization `Pᵀ K P = L D Lᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymIndefFactor {
    l: DMatrix<f64>,
    pivots: Vec<Pivot>,
    perm: Vec<usize>,
    inertia: Inertia,
    condition: f64,
}

impl SymIndefFactor {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    /// Ratio of the largest to the smallest pivot-block eigenvalue magnitude.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn pivot_sizes(&self) -> Vec<usize> {
        self.pivots
            .iter()
            .map(|p| match p {
                Pivot::One(_) => 1,
                Pivot::Two(..) => 2,
            })
            .collect()
    }

    /// Rebuilds `K = P L D Lᵀ Pᵀ` from the stored factors.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut d = DMatrix::zeros(m, m);
        let mut k = 0;
        for p in &self.pivots {
            match *p {
                Pivot::One(v) => {
                    d[(k, k)] = v;
                    k += 1;
                }
                Pivot::Two(a, b, c) => {
                    d[(k, k)] = a;
                    d[(k + 1, k)] = b;
                    d[(k, k + 1)] = b;
                    d[(k + 1, k + 1)] = c;
                    k += 2;
                }
            }
        }
        let permuted = &self.l * d * self.l.transpose();
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                out[(self.perm[i], self.perm[j])] = permuted[(i, j)];
            }
        }
        out
    }
}

fn eig_2x2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean + radius, mean - radius)
}

fn swap_sym(a: &mut DMatrix<f64>, l: &mut DMatrix<f64>, perm: &mut [usize], k: usize, i: usize) {
    if i == k {
        return;
    }
    a.swap_rows(i, k);
    a.swap_columns(i, k);
    for j in 0..k {
        l.swap((i, j), (k, j));
    }
    perm.swap(i, k);
}

/// Largest off-diagonal magnitude in column `col` of the trailing block starting at `k`.
fn col_max(a: &DMatrix<f64>, k: usize, col: usize) -> (usize, f64) {
    let mut best = (col, 0.0);
    for i in k..a.nrows() {
        if i != col && a[(i, col)].abs() > best.1 {
            best = (i, a[(i, col)].abs());
        }
    }
    best
}

/// Factorizes the symmetric part `(K + Kᵀ)/2` with rook pivoting.
///
/// Pivot-block eigenvalues with magnitude at most `zero_pivot_tol · max(1, ‖K‖_∞)`
/// are counted as zero eigenvalues.
pub fn ldlt_factor(k_in: &DMatrix<f64>, zero_pivot_tol: f64) -> Result<SymIndefFactor> {
    let m = k_in.nrows();
    if k_in.ncols() != m {
        return Err(Error::Dimension(format!(
            "ldlt_factor expects a square matrix, got {}x{}",
            m,
            k_in.ncols()
        )));
    }
    if k_in.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut a = (k_in + k_in.transpose()) * 0.5;
    let norm_inf = (0..m)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let tol = zero_pivot_tol * norm_inf.max(1.0);

    let mut l = DMatrix::identity(m, m);
    let mut perm: Vec<usize> = (0..m).collect();
    let mut pivots = Vec::with_capacity(m);

    let mut k = 0;
    while k < m {
        let (r0, colmax) = col_max(&a, k, k);
        let akk = a[(k, k)].abs();
        let mut two = false;
        if akk.max(colmax) == 0.0 || akk >= BK_ALPHA * colmax {
            // 1×1 pivot in place
        } else {
            let mut i = k;
            let mut omega_i = colmax;
            let mut r = r0;
            loop {
                let (s, omega_r) = col_max(&a, k, r);
                if a[(r, r)].abs() >= BK_ALPHA * omega_r {
                    swap_sym(&mut a, &mut l, &mut perm, k, r);
                    break;
                } else if omega_i == omega_r {
                    swap_sym(&mut a, &mut l, &mut perm, k, i);
                    let r = if r == k { i } else { r };
                    swap_sym(&mut a, &mut l, &mut perm, k + 1, r);
                    two = true;
                    break;
                }
                i = r;
                omega_i = omega_r;
                r = s;
            }
        }

        if two {
            let (d11, d21, d22) = (a[(k, k)], a[(k + 1, k)], a[(k + 1, k + 1)]);
            let det = d11 * d22 - d21 * d21;
            let (i11, i21, i22) = (d22 / det, -d21 / det, d11 / det);
            for i in (k + 2)..m {
                let (p, q) = (a[(i, k)], a[(i, k + 1)]);
                l[(i, k)] = p * i11 + q * i21;
                l[(i, k + 1)] = p * i21 + q * i22;
            }
            for i in (k + 2)..m {
                for j in (k + 2)..=i {
                    let upd = l[(i, k)] * a[(j, k)] + l[(i, k + 1)] * a[(j, k + 1)];
                    a[(i, j)] -= upd;
                    a[(j, i)] = a[(i, j)];
                }
            }
            pivots.push(Pivot::Two(d11, d21, d22));
            k += 2;
        } else {
            let d = a[(k, k)];
            if d != 0.0 {
                for i in (k + 1)..m {
                    l[(i, k)] = a[(i, k)] / d;
                }
                for i in (k + 1)..m {
                    for j in (k + 1)..=i {
                        a[(i, j)] -= l[(i, k)] * a[(j, k)];
                        a[(j, i)] = a[(i, j)];
                    }
                }
            }
            pivots.push(Pivot::One(d));
            k += 1;
        }
    }

    let mut inertia = Inertia::default();
    let mut largest: f64 = 0.0;
    let mut smallest = f64::INFINITY;
    let mut classify = |ev: f64| {
        largest = largest.max(ev.abs());
        smallest = smallest.min(ev.abs());
        if ev.abs() <= tol {
            inertia.zero += 1;
        } else if ev > 0.0 {
            inertia.positive += 1;
        } else {
            inertia.negative += 1;
        }
    };
    for p in &pivots {
        match *p {
            Pivot::One(d) => classify(d),
            Pivot::Two(a11, a21, a22) => {
                let (e1, e2) = eig_2x2(a11, a21, a22);
                classify(e1);
                classify(e2);
            }
        }
    }
    let condition = if m == 0 {
        1.0
    } else if smallest == 0.0 {
        f64::INFINITY
    } else {
        largest / smallest
    };

    Ok(SymIndefFactor { l, pivots, perm, inertia, condition })
}

/// Solves `K X = RHS` for every column of `rhs`.
pub fn ldlt_solve(factor: &SymIndefFactor, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = factor.dim();
    if rhs.nrows() != m {
        return Err(Error::Dimension(format!(
            "ldlt_solve: factor is {m}x{m} but right-hand side has {} rows",
            rhs.nrows()
        )));
    }
    if factor.inertia.zero > 0 {
        return Err(Error::Singular { zero_pivots: factor.inertia.zero });
    }
    let mut x = DMatrix::zeros(m, rhs.ncols());
    for (col, b) in rhs.column_iter().enumerate() {
        let mut y = DVector::from_fn(m, |i, _| b[factor.perm[i]]);
        // forward substitution with unit lower L
        for i in 0..m {
            let mut s = y[i];
            for j in 0..i {
                s -= factor.l[(i, j)] * y[j];
            }
            y[i] = s;
        }
        let mut k = 0;
        for p in &factor.pivots {
            match *p {
                Pivot::One(d) => {
                    y[k] /= d;
                    k += 1;
                }
                Pivot::Two(a, b, c) => {
                    let det = a * c - b * b;
                    let (y0, y1) = (y[k], y[k + 1]);
                    y[k] = (c * y0 - b * y1) / det;
                    y[k + 1] = (a * y1 - b * y0) / det;
                    k += 2;
                }
            }
        }
        for i in (0..m).rev() {
            let mut s = y[i];
            for j in (i + 1)..m {
                s -= factor.l[(j, i)] * y[j];
            }
            y[i] = s;
        }
        for i in 0..m {
            x[(factor.perm[i], col)] = y[i];
        }
    }
    Ok(x)
}

/// Third-order tensor `T[p][a][b]` stored as `p` slices of `a×b` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub slices: Vec<DMatrix<f64>>,
    rows: usize,
    cols: usize,
}

impl Tensor3 {
    pub fn zeros(p: usize, rows: usize, cols: usize) -> Self {
        Self { slices: vec![DMatrix::zeros(rows, cols); p], rows, cols }
    }

    pub fn from_slices(slices: Vec<DMatrix<f64>>, rows: usize, cols: usize) -> Result<Self> {
        if slices.iter().any(|s| s.shape() != (rows, cols)) {
            return Err(Error::Dimension(format!("tensor slices must all be {rows}x{cols}")));
        }
        Ok(Self { slices, rows, cols })
    }

    /// `(p, a, b)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.slices.len(), self.rows, self.cols)
    }
}

/// `result[i][j] = Σ_k v[k] · T[k][i][j]`
pub fn contract_first(v: &DVector<f64>, t: &Tensor3) -> Result<DMatrix<f64>> {
    if v.len() != t.slices.len() {
        return Err(Error::Dimension(format!(
            "contract_first: vector has {} entries, tensor has {} slices",
            v.len(),
            t.slices.len()
        )));
    }
    let mut out = DMatrix::zeros(t.rows, t.cols);
    for (vk, slice) in v.iter().zip(&t.slices) {
        if *vk != 0.0 {
            out += slice * *vk;
        }
    }
    Ok(out)
}
