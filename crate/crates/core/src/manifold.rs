//! Geometry of `M(d,N)`: full-rank `N×d` matrices whose columns are mutually orthogonal
//! but not necessarily unit norm.
//!
//! The tangent space at `X` is `{ζ : offdiag(ζᵀX + Xᵀζ) = 0}` and the normal space is
//! `{XΛ : Λ symmetric with zero diagonal}`. Points are retracted with the `Q̃` factor of the
//! modified QR decomposition, which keeps column norms in the orthogonal factor.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_mismatch, Error, Result};
use crate::graph::rng_from_seed;
use crate::numerics::modified_qr;

/// Relative tolerance on `offdiag(XᵀX)` for membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Columns with norm below this are treated as zero.
pub const ZERO_COLUMN: f64 = 1e-12;

/// Largest off-diagonal Gram entry relative to `‖X‖_F²`.
pub fn constraint_violation(x: &DMatrix<f64>) -> f64 {
    let gram = x.transpose() * x;
    let scale = x.norm_squared();
    if scale == 0.0 {
        return 0.0;
    }
    let d = gram.nrows();
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..d {
            if i != j {
                worst = worst.max(gram[(i, j)].abs());
            }
        }
    }
    worst / scale
}

/// True iff `X` has no zero column and `XᵀX` is diagonal to `tol` relative to `‖X‖_F²`.
pub fn is_on_manifold(x: &DMatrix<f64>, tol: f64) -> bool {
    x.ncols() > 0
        && x.ncols() <= x.nrows()
        && x.iter().all(|v| v.is_finite())
        && x.column_iter().all(|c| c.norm() > ZERO_COLUMN)
        && constraint_violation(x) <= tol
}

/// A validated element of `M(d,N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint(DMatrix<f64>);

impl ManifoldPoint {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if let Some(k) = x.column_iter().position(|c| c.norm() <= ZERO_COLUMN) {
            return Err(Error::NotOnManifold(format!("column {k} is zero")));
        }
        if !is_on_manifold(&x, MEMBERSHIP_TOL) {
            return Err(Error::NotOnManifold(format!(
                "off-diagonal Gram entries reach {:e} relative",
                constraint_violation(&x)
            )));
        }
        Ok(Self(x))
    }

    /// Gaussian matrix pushed onto the manifold by the modified QR.
    pub fn random(n: usize, d: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let g = DMatrix::from_fn(n, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let q = modified_qr(&g)?.q;
        Ok(Self(q))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Column norms, i.e. the diagonal of `D = (XᵀX)^{1/2}`.
    pub fn column_norms(&self) -> Vec<f64> {
        self.0.column_iter().map(|c| c.norm()).collect()
    }
}

/// A tangent vector at some manifold point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(DMatrix<f64>);

impl TangentVector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(&self.0 * alpha)
    }
}

/// Largest off-diagonal entry of `ζᵀX + Xᵀζ` relative to `‖X‖_F·‖ζ‖_F`.
pub fn tangent_violation(x: &DMatrix<f64>, zeta: &DMatrix<f64>) -> f64 {
    let s = zeta.transpose() * x + x.transpose() * zeta;
    let scale = x.norm() * zeta.norm();
    if scale == 0.0 {
        return 0.0;
    }
    let d = s.nrows();
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..d {
            if i != j {
                worst = worst.max(s[(i, j)].abs());
            }
        }
    }
    worst / scale
}

fn check_shape(x: &ManifoldPoint, z: &DMatrix<f64>) -> Result<()> {
    if x.0.shape() != z.shape() {
        return Err(shape_mismatch(
            format!("{}x{}", x.0.nrows(), x.0.ncols()),
            format!("{}x{}", z.nrows(), z.ncols()),
        ));
    }
    Ok(())
}

/// `s(Z) = (Z + Zᵀ)/2 − diag(Z)`: the symmetric, zero-diagonal part.
fn symmetrize_hollow(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = (z + z.transpose()) * 0.5;
    s.fill_diagonal(0.0);
    s
}

/// Orthogonal projection onto the normal space, `X·s(2DL)` with
/// `D = (XᵀX)^{1/2}`, `E_ij = D_ii² + D_jj²`, `F = 1/E` entrywise and `L = (D⁻¹XᵀZ)∘F`.
pub fn project_normal(x: &ManifoldPoint, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shape(x, z)?;
    Ok(&x.0 * normal_multiplier(x, z))
}

/// The `Λ` with `project_normal(X, Z) = XΛ`.
pub fn normal_multiplier(x: &ManifoldPoint, z: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x.0.ncols();
    // X on the manifold has a diagonal Gram, so its square root is taken entrywise.
    let norms = x.column_norms();
    let xtz = x.0.tr_mul(z);
    let mut two_dl = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            let f = 1.0 / (norms[i] * norms[i] + norms[j] * norms[j]);
            let l = xtz[(i, j)] / norms[i] * f;
            two_dl[(i, j)] = 2.0 * norms[i] * l;
        }
    }
    symmetrize_hollow(&two_dl)
}

/// `π_X(Z) = Z − π⊥_X(Z)`.
pub fn project_tangent(x: &ManifoldPoint, z: &DMatrix<f64>) -> Result<TangentVector> {
    let normal = project_normal(x, z)?;
    Ok(TangentVector(z - normal))
}

/// The Riemannian gradient under the trace metric: the tangent projection of the Euclidean one.
pub fn riemannian_grad(x: &ManifoldPoint, euclid_grad: &DMatrix<f64>) -> Result<TangentVector> {
    project_tangent(x, euclid_grad)
}

/// `R_X(ζ) = q̃f(X + ζ)`.
pub fn retract(x: &ManifoldPoint, zeta: &TangentVector) -> Result<ManifoldPoint> {
    check_shape(x, &zeta.0)?;
    if zeta.0.iter().all(|&v| v == 0.0) {
        return Ok(x.clone());
    }
    let moved = &x.0 + &zeta.0;
    match modified_qr(&moved) {
        Ok(f) => Ok(ManifoldPoint(f.q)),
        Err(Error::RankDeficient { pivot, magnitude }) => Err(Error::Retraction(format!(
            "X + ζ lost rank at column {pivot} (|R_kk| = {magnitude:e})"
        ))),
        Err(e) => Err(e),
    }
}

/// Wraps an arbitrary matrix as a tangent vector without projecting it; callers are
/// responsible for tangency.
pub(crate) fn tangent_unchecked(z: DMatrix<f64>) -> TangentVector {
    TangentVector(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn e_block() -> ManifoldPoint {
        ManifoldPoint::new(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap()
    }

    #[test]
    fn membership_examples() {
        let id = DMatrix::<f64>::identity(5, 5).columns(0, 3).into_owned();
        assert!(is_on_manifold(&id, MEMBERSHIP_TOL));
        let equal_cols = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        assert!(!is_on_manifold(&equal_cols, MEMBERSHIP_TOL));
        let zero_col = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(!is_on_manifold(&zero_col, MEMBERSHIP_TOL));
        assert!(matches!(ManifoldPoint::new(zero_col), Err(Error::NotOnManifold(_))));
    }

    #[test]
    fn normal_projection_hand_example() {
        let x = e_block();
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 0.0, 0.0]);
        let n = project_normal(&x, &z).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[0.0, 2.5, 2.5, 0.0, 0.0, 0.0]);
        assert!((n - expected).amax() < 1e-15);
    }

    #[test]
    fn projections_fix_their_own_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = ManifoldPoint::random(7, 3, 1.5, 3).unwrap();
        let z = gaussian(7, 3, &mut rng);
        let t = project_tangent(&x, &z).unwrap();
        // Tangent input: normal part vanishes, tangent part unchanged.
        assert!(project_normal(&x, t.matrix()).unwrap().amax() < 1e-12);
        assert!((project_tangent(&x, t.matrix()).unwrap().matrix() - t.matrix()).amax() < 1e-12);
        // Normal input XΛ: returned as is, tangent part zero.
        let lambda = DMatrix::from_row_slice(3, 3, &[0.0, 0.3, -1.0, 0.3, 0.0, 2.0, -1.0, 2.0, 0.0]);
        let nz = x.matrix() * lambda;
        assert!((project_normal(&x, &nz).unwrap() - &nz).amax() < 1e-12);
        assert!(project_tangent(&x, &nz).unwrap().matrix().amax() < 1e-12);
    }

    #[test]
    fn tangent_and_normal_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for seed in 0..10 {
            let x = ManifoldPoint::random(8, 3, 0.7, seed).unwrap();
            let z = gaussian(8, 3, &mut rng);
            let t = project_tangent(&x, &z).unwrap();
            let n = project_normal(&x, &z).unwrap();
            assert!(t.matrix().dot(&n).abs() <= 1e-9 * z.norm_squared());
            assert!(tangent_violation(x.matrix(), t.matrix()) < 1e-12);
        }
    }

    #[test]
    fn retract_zero_is_identity() {
        let x = ManifoldPoint::random(6, 2, 1.0, 0).unwrap();
        let zero = TangentVector(DMatrix::zeros(6, 2));
        assert_eq!(retract(&x, &zero).unwrap(), x);
    }

    #[test]
    fn retract_rank_failure() {
        let x = e_block();
        let zeta = TangentVector(DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        assert!(matches!(retract(&x, &zeta), Err(Error::Retraction(_))));
    }

    #[test]
    fn retraction_agrees_to_first_order() {
        let x = e_block();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zeta = project_tangent(&x, &gaussian(3, 2, &mut rng)).unwrap();
        let gap = |t: f64| {
            let step = zeta.scaled(t);
            let r = retract(&x, &step).unwrap();
            (r.matrix() - (x.matrix() + step.matrix())).norm()
        };
        let mut t = 1e-2;
        while t > 1e-5 {
            let ratio = gap(t) / gap(t / 2.0);
            assert!((3.5..=4.5).contains(&ratio), "t={t}: ratio {ratio}");
            t /= 2.0;
        }
    }

    #[test]
    fn riemannian_grad_trivial_cases() {
        let x = ManifoldPoint::random(5, 2, 1.0, 9).unwrap();
        assert_eq!(riemannian_grad(&x, &DMatrix::zeros(5, 2)).unwrap().matrix().amax(), 0.0);
        let lambda = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let normal = x.matrix() * lambda;
        assert!(riemannian_grad(&x, &normal).unwrap().matrix().amax() < 1e-12);
    }
}
