//! Dense linear-algebra kernels shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen, QR};

use crate::error::{shape_mismatch, Error, Result};

/// Which eigenvalues count as "leading".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    /// Largest absolute value first.
    Magnitude,
    /// Largest signed value first.
    Algebraic,
}

/// Leading eigenpairs of a symmetric matrix. Columns of `vectors` are orthonormal.
#[derive(Debug, Clone)]
pub struct SpectralPair {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Leading singular triplets: `A ≈ left · diag(values) · rightᵀ`.
#[derive(Debug, Clone)]
pub struct SingularTriplets {
    pub values: DVector<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

/// Modified QR factors: `q` has orthogonal (not unit) columns, `r` is unit upper triangular.
#[derive(Debug, Clone)]
pub struct ModifiedQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

pub(crate) fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Relative symmetry check used by the spectral routines.
pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let n = a.nrows();
    (0..n).all(|i| ((i + 1)..n).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= rel_tol * scale))
}

fn check_dim(n: usize, d: usize) -> Result<()> {
    if d == 0 || d > n {
        return Err(Error::InvalidSize(format!(
            "dimension {d} must lie in 1..={n}"
        )));
    }
    Ok(())
}

/// Flips column signs so the largest-magnitude entry of each column is positive.
/// Returns the applied signs.
fn canonical_signs(vectors: &mut DMatrix<f64>) -> Vec<f64> {
    let mut signs = Vec::with_capacity(vectors.ncols());
    for mut col in vectors.column_iter_mut() {
        let mut best = 0.0f64;
        for &v in col.iter() {
            if v.abs() > best.abs() {
                best = v;
            }
        }
        let s = if best < 0.0 { -1.0 } else { 1.0 };
        if s < 0.0 {
            col.neg_mut();
        }
        signs.push(s);
    }
    signs
}

/// Leading `d` eigenpairs of a symmetric matrix under the requested ordering.
pub fn top_eigen(a: &DMatrix<f64>, d: usize, order: EigenOrder) -> Result<SpectralPair> {
    if a.nrows() != a.ncols() {
        return Err(shape_mismatch(
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    check_dim(a.nrows(), d)?;
    if !is_symmetric(a, 1e-10) {
        return Err(Error::Contract("eigendecomposition needs a symmetric matrix".into()));
    }
    let eig = SymmetricEigen::new(a.clone());
    let mut idx: Vec<usize> = (0..a.nrows()).collect();
    let key = |i: usize| match order {
        EigenOrder::Magnitude => eig.eigenvalues[i].abs(),
        EigenOrder::Algebraic => eig.eigenvalues[i],
    };
    idx.sort_by(|&i, &j| key(j).total_cmp(&key(i)));
    idx.truncate(d);
    let values = DVector::from_iterator(d, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(&idx);
    canonical_signs(&mut vectors);
    Ok(SpectralPair { values, vectors })
}

/// Leading `d` singular triplets. Left vectors follow the eigenvector sign
/// convention and right vectors flip with them.
///
/// Computed from the symmetric eigendecomposition of `[[0, A], [Aᵀ, 0]]`, whose positive
/// eigenvalues are the singular values of `A`. nalgebra's bidiagonal SVD returns wrong
/// factors for some exactly rank-deficient inputs, which low-rank probability matrices are.
pub fn top_svd(a: &DMatrix<f64>, d: usize) -> Result<SingularTriplets> {
    let (m, n) = a.shape();
    check_dim(m.min(n), d)?;
    let mut h = DMatrix::zeros(m + n, m + n);
    h.view_mut((0, m), (m, n)).copy_from(a);
    h.view_mut((m, 0), (n, m)).copy_from(&a.transpose());
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..m + n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let tol = 1e-12 * a.amax().max(f64::MIN_POSITIVE) * (m.max(n) as f64);

    let mut values = DVector::zeros(d);
    let mut left = DMatrix::zeros(m, d);
    let mut right = DMatrix::zeros(n, d);
    for k in 0..d {
        let w = eig.eigenvectors.column(idx[k]);
        let u = w.rows(0, m).into_owned();
        let u_norm = u.norm();
        if eig.eigenvalues[idx[k]] > tol && u_norm > 0.0 {
            let u = u / u_norm;
            let v = a.tr_mul(&u);
            let sigma = v.norm();
            values[k] = sigma;
            left.set_column(k, &u);
            right.set_column(k, &(v / sigma));
        } else {
            complete_column(&mut left, k);
            complete_column(&mut right, k);
        }
    }
    let signs = canonical_signs(&mut left);
    for (mut col, s) in right.column_iter_mut().zip(signs) {
        col *= s;
    }
    Ok(SingularTriplets {
        values,
        left,
        right,
    })
}

/// Fills column `k` with a unit vector orthogonal to columns `0..k`.
fn complete_column(q: &mut DMatrix<f64>, k: usize) {
    let rows = q.nrows();
    let mut best: Option<DVector<f64>> = None;
    for e in 0..rows {
        let mut v = DVector::zeros(rows);
        v[e] = 1.0;
        for j in 0..k {
            let c = q.column(j).dot(&v);
            v.axpy(-c, &q.column(j), 1.0);
        }
        let norm = v.norm();
        if best.as_ref().is_none_or(|b| norm > b.norm()) {
            best = Some(v);
        }
        if norm > 0.5 {
            break;
        }
    }
    if let Some(v) = best {
        let norm = v.norm();
        if norm > 0.0 {
            q.set_column(k, &(v / norm));
        }
    }
}

/// Largest eigenvalue of a small symmetric matrix.
pub(crate) fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Estimate of the spectral radius by power iteration from the all-ones vector.
///
/// For nonnegative matrices this converges to the Perron root.
pub fn spectral_radius_estimate(a: &DMatrix<f64>, max_iters: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let done = (norm - estimate).abs() <= 1e-6 * norm;
        estimate = norm;
        v = w / norm;
        if done {
            break;
        }
    }
    estimate
}

/// `Z = Q̃ R̃` with `Q̃ = Q·diag(R)` and `R̃ = diag(R)⁻¹·R` from the thin Householder QR of `Z`.
pub fn modified_qr(z: &DMatrix<f64>) -> Result<ModifiedQr> {
    let (n, d) = z.shape();
    check_dim(n, d)?;
    let scale = z.norm();
    let qr = QR::new(z.clone());
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..d {
        let pivot = r[(k, k)];
        if !pivot.is_finite() || pivot.abs() < 1e-12 * scale || scale == 0.0 {
            return Err(Error::RankDeficient {
                pivot: k,
                magnitude: pivot.abs(),
            });
        }
        q.column_mut(k).scale_mut(pivot);
        r.row_mut(k).unscale_mut(pivot);
        r[(k, k)] = 1.0;
    }
    Ok(ModifiedQr { q, r })
}

/// Orthogonal Procrustes: the orthonormal `W` minimizing `‖XW − Y‖_F²`, and that minimum.
pub fn procrustes_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if x.shape() != y.shape() {
        return Err(shape_mismatch(
            format!("{}x{}", x.nrows(), x.ncols()),
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    let cross = x.transpose() * y;
    let t = top_svd(&cross, cross.nrows())?;
    let w = t.left * t.right.transpose();
    let dist = frobenius_sq(&(x * &w - y)).max(0.0);
    Ok((dist, w))
}

/// Solves `R x = b` for symmetric positive definite `R` via Cholesky.
pub fn solve_spd(r: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let d = r.nrows();
    if r.ncols() != d || b.len() != d {
        return Err(shape_mismatch(
            format!("{d}x{d} system with length-{d} rhs"),
            format!("{}x{} with length-{}", r.nrows(), r.ncols(), b.len()),
        ));
    }
    let max_diag = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let floor = f64::EPSILON * max_diag * d as f64;
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut pivot = r[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > floor) {
            return Err(Error::Singular { pivot: j });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut s = r[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    let mut y = b.clone();
    for i in 0..d {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..d).rev() {
        for k in (i + 1)..d {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn complete(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
    }

    #[test]
    fn eigen_of_triangle() {
        let pair = top_eigen(&complete(3), 1, EigenOrder::Magnitude).unwrap();
        assert_relative_eq!(pair.values[0], 2.0, epsilon = 1e-12);
        for i in 0..3 {
            assert_relative_eq!(pair.vectors[(i, 0)], 1.0 / 3f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn eigen_trivial_cases() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let pair = top_eigen(&a, 1, EigenOrder::Algebraic).unwrap();
        assert_eq!(pair.values[0], 3.0);
        assert_relative_eq!(pair.vectors[(0, 0)], 1.0);
        assert_eq!(pair.vectors[(1, 0)], 0.0);

        let pair = top_eigen(&DMatrix::zeros(3, 3), 2, EigenOrder::Magnitude).unwrap();
        assert_eq!(pair.values.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn eigen_orderings_differ_on_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[-5.0, 0.0, 0.0, 1.0]);
        assert_eq!(top_eigen(&a, 1, EigenOrder::Magnitude).unwrap().values[0], -5.0);
        assert_eq!(top_eigen(&a, 1, EigenOrder::Algebraic).unwrap().values[0], 1.0);
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            top_eigen(&a, 1, EigenOrder::Magnitude),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn eigen_residuals_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = gaussian(12, 12, &mut rng);
        let a = &g + g.transpose();
        let pair = top_eigen(&a, 4, EigenOrder::Magnitude).unwrap();
        let scale = a.norm();
        for k in 0..4 {
            let v = pair.vectors.column(k);
            let res = &a * v - v * pair.values[k];
            assert!(res.norm() <= 1e-8 * scale);
            let (imax, _) = v.iamax_full();
            assert!(v[imax] > 0.0);
        }
        let gram = pair.vectors.transpose() * &pair.vectors;
        assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-10);
    }

    #[test]
    fn svd_trivial_cases() {
        let a = DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 2.0]);
        let t = top_svd(&a, 1).unwrap();
        assert_relative_eq!(t.values[0], 5.0, epsilon = 1e-12);
        assert_relative_eq!(t.left[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(t.right[(0, 0)], 1.0, epsilon = 1e-12);

        let a_vec = DVector::from_row_slice(&[0.6, 0.8, 0.0]);
        let b_vec = DVector::from_row_slice(&[0.0, 1.0, 0.0]);
        let t = top_svd(&(&a_vec * b_vec.transpose()), 2).unwrap();
        assert_relative_eq!(t.values[0], 1.0, epsilon = 1e-12);
        assert!(t.values[1].abs() < 1e-12);
    }

    #[test]
    fn svd_reconstructs_rank_deficient_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let g = gaussian(50, 2, &mut rng);
            let h = gaussian(50, 2, &mut rng);
            let a = &g * h.transpose();
            let t = top_svd(&a, 2).unwrap();
            let rec = &t.left * DMatrix::from_diagonal(&t.values) * t.right.transpose();
            assert!((rec - &a).amax() < 1e-10 * a.amax());
            let gram = t.left.tr_mul(&t.left);
            assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
        }
    }

    #[test]
    fn svd_matches_eigen_on_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = gaussian(8, 3, &mut rng);
        let a = &g * g.transpose();
        let t = top_svd(&a, 3).unwrap();
        let e = top_eigen(&a, 3, EigenOrder::Algebraic).unwrap();
        for k in 0..3 {
            assert_relative_eq!(t.values[k], e.values[k], max_relative = 1e-10);
        }
        assert!((&t.left - &e.vectors).amax() < 1e-8);
    }

    #[test]
    fn modified_qr_examples() {
        let z = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let f = modified_qr(&z).unwrap();
        assert!((&f.q - &z).amax() < 1e-15);
        assert_eq!(f.r, DMatrix::identity(2, 2));

        let z = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let f = modified_qr(&z).unwrap();
        assert!((&f.q - DMatrix::identity(2, 2)).amax() < 1e-15);
        assert!((&f.r - &z).amax() < 1e-15);
    }

    #[test]
    fn modified_qr_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let z = gaussian(9, 4, &mut rng);
            let f = modified_qr(&z).unwrap();
            assert!((&f.q * &f.r - &z).amax() <= 1e-10 * z.amax());
            let gram = f.q.transpose() * &f.q;
            for i in 0..4 {
                assert_eq!(f.r[(i, i)], 1.0);
                for j in 0..4 {
                    if i != j {
                        assert!(gram[(i, j)].abs() < 1e-10 * gram.amax());
                    }
                    if i > j {
                        assert_eq!(f.r[(i, j)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn modified_qr_rank_deficient() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(modified_qr(&z), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn procrustes_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(10, 2, &mut rng);
        let theta: f64 = 0.7;
        let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let (dist, _) = procrustes_distance(&x, &(&x * rot)).unwrap();
        assert!(dist < 1e-20 * x.norm_squared().max(1.0) || dist < 1e-24);
        let (dist, w) = procrustes_distance(&x, &x).unwrap();
        assert!(dist < 1e-24);
        assert!((w - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(procrustes_distance(&x, &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn procrustes_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x = gaussian(8, 2, &mut rng);
            let y = gaussian(8, 2, &mut rng);
            let (dist, _) = procrustes_distance(&x, &y).unwrap();
            // Coarse grid over rotations and reflections, then golden-section refinement.
            let cost = |theta: f64, reflect: bool| {
                let (c, s) = (theta.cos(), theta.sin());
                let w = if reflect {
                    DMatrix::from_row_slice(2, 2, &[c, s, s, -c])
                } else {
                    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
                };
                (&x * w - &y).norm_squared()
            };
            let mut best = f64::INFINITY;
            for reflect in [false, true] {
                let steps = 3600;
                let h = std::f64::consts::TAU / steps as f64;
                let (mut k_best, mut c_best) = (0, f64::INFINITY);
                for k in 0..steps {
                    let c = cost(k as f64 * h, reflect);
                    if c < c_best {
                        c_best = c;
                        k_best = k;
                    }
                }
                let (mut lo, mut hi) = ((k_best as f64 - 1.0) * h, (k_best as f64 + 1.0) * h);
                let g = (5f64.sqrt() - 1.0) / 2.0;
                for _ in 0..100 {
                    let m1 = hi - g * (hi - lo);
                    let m2 = lo + g * (hi - lo);
                    if cost(m1, reflect) < cost(m2, reflect) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                best = best.min(cost(0.5 * (lo + hi), reflect));
            }
            assert!((dist - best).abs() < 1e-6, "{dist} vs grid {best}");
        }
    }

    #[test]
    fn solve_spd_examples() {
        let b = DVector::from_row_slice(&[3.0, -1.0]);
        assert_eq!(solve_spd(&DMatrix::identity(2, 2), &b).unwrap(), b);
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = solve_spd(&r, &DVector::from_row_slice(&[2.0, 4.0])).unwrap();
        assert!((x - DVector::from_row_slice(&[1.0, 1.0])).amax() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let g = gaussian(5, 5, &mut rng);
            let r = &g * g.transpose() + DMatrix::identity(5, 5) * 0.1;
            let x_true = DVector::from_fn(5, |_, _| rng.sample(StandardNormal));
            let b = &r * &x_true;
            let x = solve_spd(&r, &b).unwrap();
            assert!((&x - &x_true).amax() < 1e-9);
            assert!((&r * &x - &b).norm() <= 1e-10 * b.norm());
        }
    }

    #[test]
    fn solve_spd_rejects_indefinite() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let b = DVector::from_element(2, 1.0);
        assert!(matches!(solve_spd(&r, &b), Err(Error::Singular { pivot: 1 })));
        assert!(matches!(
            solve_spd(&DMatrix::zeros(2, 2), &b),
            Err(Error::Singular { pivot: 0 })
        ));
    }

    #[test]
    fn power_iteration_on_complete_graph() {
        let est = spectral_radius_estimate(&complete(5), 100);
        assert_relative_eq!(est, 4.0, epsilon = 1e-6);
        assert_eq!(spectral_radius_estimate(&DMatrix::zeros(3, 3), 10), 0.0);
    }
}
