//! Reference implementations used as test oracles. They are written from the definitions with
//! explicit loops and share no code with the library's solvers.

#![allow(dead_code)]

use rdpg::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `Σ_ij M_ij (A_ij − Σ_k L_ik R_jk)²`.
pub fn masked_cost(a: &DMatrix<f64>, m: &DMatrix<f64>, l: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let d = l.ncols();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)] == 0.0 {
                continue;
            }
            let mut dot = 0.0;
            for k in 0..d {
                dot += l[(i, k)] * r[(j, k)];
            }
            total += m[(i, j)] * (a[(i, j)] - dot).powi(2);
        }
    }
    total
}

/// Central differences of `f` at `x`, entry by entry.
pub fn fd_gradient(f: impl Fn(&DMatrix<f64>) -> f64, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            g[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    g
}

pub fn relative_error(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).norm() / want.norm().max(f64::MIN_POSITIVE)
}

/// Symmetric 0/1 mask with zero diagonal where each off-diagonal pair is hidden with
/// probability `hide`.
pub fn random_mask(n: usize, directed: bool, hide: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        m[(i, i)] = 0.0;
        for j in 0..n {
            if i == j || (!directed && j < i) {
                continue;
            }
            if rng.random::<f64>() < hide {
                m[(i, j)] = 0.0;
                if !directed {
                    m[(j, i)] = 0.0;
                }
            }
        }
    }
    m
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn std_dev(values: &[f64]) -> f64 {
    let mu = mean(values);
    (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

pub fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

/// Mean of the rows of `x` selected by `rows`.
pub fn row_mean(x: &DMatrix<f64>, rows: std::ops::Range<usize>) -> DVector<f64> {
    let count = rows.len() as f64;
    let mut acc = DVector::zeros(x.ncols());
    for i in rows {
        acc += x.row(i).transpose();
    }
    acc / count
}

/// Largest absolute off-diagonal entry of `XᵀX`, relative to its largest diagonal entry.
pub fn offdiag_ratio(x: &DMatrix<f64>) -> f64 {
    let g = x.transpose() * x;
    let mut off = 0.0f64;
    let mut diag = 0.0f64;
    for i in 0..g.nrows() {
        diag = diag.max(g[(i, i)].abs());
        for j in 0..g.ncols() {
            if i != j {
                off = off.max(g[(i, j)].abs());
            }
        }
    }
    off / diag
}

/// Random orthonormal `d×d` matrix via Gram–Schmidt on a Gaussian draw.
pub fn random_orthonormal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian(d, d, rng);
    let mut q = DMatrix::<f64>::zeros(d, d);
    for k in 0..d {
        let mut v = g.column(k).into_owned();
        for j in 0..k {
            let c = q.column(j).dot(&v);
            v -= q.column(j) * c;
        }
        let norm = v.norm();
        q.set_column(k, &(v / norm));
    }
    q
}
