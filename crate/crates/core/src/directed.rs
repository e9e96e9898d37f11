//! Directed embeddings `A ≈ Xˡ(Xʳ)ᵀ` with both factors constrained to have orthogonal columns.

use log::debug;
use nalgebra::DMatrix;

use crate::error::{shape_mismatch, Error, Result};
use crate::graph::{AdjacencyMatrix, ObservationMask};
use crate::manifold::{
    constraint_violation, project_tangent, retract, tangent_unchecked, ManifoldPoint,
};
use crate::numerics::{frobenius_sq, top_svd};
use crate::undirected::{default_ids, relative_decrease, Init, SolveReport, SolverConfig};

/// Outgoing (`left`) and incoming (`right`) latent positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedEmbedding {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    ids: Vec<String>,
}

impl DirectedEmbedding {
    pub fn new(left: DMatrix<f64>, right: DMatrix<f64>, ids: Vec<String>) -> Result<Self> {
        if left.shape() != right.shape() {
            return Err(shape_mismatch(
                format!("{}x{}", left.nrows(), left.ncols()),
                format!("{}x{}", right.nrows(), right.ncols()),
            ));
        }
        if ids.len() != left.nrows() {
            return Err(shape_mismatch(left.nrows(), ids.len()));
        }
        Ok(Self { left, right, ids })
    }

    pub fn from_pair(left: DMatrix<f64>, right: DMatrix<f64>) -> Result<Self> {
        let ids = default_ids(left.nrows());
        Self::new(left, right, ids)
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n(&self) -> usize {
        self.left.nrows()
    }

    pub fn d(&self) -> usize {
        self.left.ncols()
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(shape_mismatch(self.n(), ids.len()));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>, Vec<String>) {
        (self.left, self.right, self.ids)
    }

    /// Largest deviation of the pair from `(Xˡ)ᵀXˡ = (Xʳ)ᵀXʳ` diagonal, relative to the
    /// largest Gram diagonal entry.
    pub fn gram_gap(&self) -> f64 {
        gram_gap(&self.left, &self.right)
    }
}

pub(crate) fn gram_gap(left: &DMatrix<f64>, right: &DMatrix<f64>) -> f64 {
    let gl = left.tr_mul(left);
    let gr = right.tr_mul(right);
    let d = gl.nrows();
    let scale = gl.diagonal().amax().max(gr.diagonal().amax());
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..d {
            let v = if i == j {
                (gl[(i, i)] - gr[(i, i)]).abs()
            } else {
                gl[(i, j)].abs().max(gr[(i, j)].abs())
            };
            worst = worst.max(v);
        }
    }
    worst / scale
}

/// Backtracking line search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoConfig {
    pub initial_step: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 30,
        }
    }
}

impl ArmijoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..1.0;
        if !(self.initial_step > 0.0)
            || !unit.contains(&self.backtrack)
            || self.backtrack == 0.0
            || !unit.contains(&self.sufficient_decrease)
            || self.sufficient_decrease == 0.0
        {
            return Err(Error::InvalidConfig(format!("invalid Armijo parameters {self:?}")));
        }
        Ok(())
    }
}

/// Step-size rule for one Riemannian GD iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Armijo(ArmijoConfig),
    /// Constant step; rank failures in the retraction halve it for that iteration only.
    Fixed(f64),
}

fn check_pair(
    a: &AdjacencyMatrix,
    m: &ObservationMask,
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
) -> Result<()> {
    let n = a.n();
    if m.n() != n {
        return Err(shape_mismatch(format!("{n}x{n} mask"), format!("{0}x{0}", m.n())));
    }
    if left.nrows() != n || left.shape() != right.shape() {
        return Err(shape_mismatch(
            format!("two {n}-row factors of equal shape"),
            format!("{:?} and {:?}", left.shape(), right.shape()),
        ));
    }
    Ok(())
}

fn residual(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut s = left * right.transpose();
    s -= a;
    s.component_mul_assign(m);
    s
}

/// `‖M∘(A − Xˡ(Xʳ)ᵀ)‖_F²`.
pub fn cost_directed(
    a: &AdjacencyMatrix,
    m: &ObservationMask,
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
) -> Result<f64> {
    check_pair(a, m, left, right)?;
    Ok(frobenius_sq(&residual(a.entries(), m.entries(), left, right)))
}

/// Euclidean gradients `(2SXʳ, 2SᵀXˡ)` with `S = M∘(Xˡ(Xʳ)ᵀ − A)`.
pub fn grad_directed(
    a: &AdjacencyMatrix,
    m: &ObservationMask,
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_pair(a, m, left, right)?;
    let s = residual(a.entries(), m.entries(), left, right);
    Ok(euclid_grads(&s, left, right))
}

fn euclid_grads(
    s: &DMatrix<f64>,
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    (s * right * 2.0, s.tr_mul(left) * 2.0)
}

/// `Xˡ = ÛΣ̂^{1/2}`, `Xʳ = V̂Σ̂^{1/2}` from the top-`d` SVD.
pub fn ase_directed(a: &AdjacencyMatrix, d: usize) -> Result<DirectedEmbedding> {
    let (left, right) = ase_directed_matrix(a.entries(), d)?;
    DirectedEmbedding::from_pair(left, right)
}

pub(crate) fn ase_directed_matrix(a: &DMatrix<f64>, d: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = top_svd(a, d)?;
    let floor = 1e-12 * a.amax().max(f64::MIN_POSITIVE) * a.nrows() as f64;
    let usable = t.values.iter().filter(|&&s| s > floor).count();
    if usable < d {
        return Err(Error::Dimension {
            requested: d,
            usable,
        });
    }
    let mut left = t.left;
    let mut right = t.right;
    for k in 0..d {
        let s = t.values[k].sqrt();
        left.column_mut(k).scale_mut(s);
        right.column_mut(k).scale_mut(s);
    }
    Ok((left, right))
}

fn initial_pair(
    a: &AdjacencyMatrix,
    m: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(ManifoldPoint, ManifoldPoint)> {
    let n = a.n();
    if cfg.d > n {
        return Err(Error::InvalidSize(format!("dimension {} exceeds node count {n}", cfg.d)));
    }
    let (left, right) = match &cfg.init {
        Init::Spectral => ase_directed_matrix(&a.entries().component_mul(m.entries()), cfg.d)?,
        Init::Random { scale, seed } => {
            let scale = scale.unwrap_or_else(|| {
                let mean_degree = a.entries().sum() / n as f64;
                (mean_degree / (n * cfg.d) as f64).sqrt()
            });
            let left = ManifoldPoint::random(n, cfg.d, scale, *seed)?;
            let right = ManifoldPoint::random(n, cfg.d, scale, seed.wrapping_add(1))?;
            return Ok((left, right));
        }
        Init::WarmPair(l, r) => (l.clone(), r.clone()),
        Init::Warm(_) => {
            return Err(Error::InvalidConfig(
                "directed solvers need a (left, right) warm-start pair".into(),
            ))
        }
    };
    if left.shape() != (n, cfg.d) || right.shape() != (n, cfg.d) {
        return Err(shape_mismatch(
            format!("{n}x{} factors", cfg.d),
            format!("{:?} and {:?}", left.shape(), right.shape()),
        ));
    }
    Ok((ManifoldPoint::new(left)?, ManifoldPoint::new(right)?))
}

/// Riemannian gradient descent on `M(d,N) × M(d,N)`: project both Euclidean gradients onto
/// their tangent spaces, then retract each factor along the negative gradient.
///
/// The returned pair has its columns rescaled so both Gram matrices coincide.
pub fn solve_riemannian_gd(
    a: &AdjacencyMatrix,
    m: &ObservationMask,
    cfg: &SolverConfig,
    armijo: &ArmijoConfig,
) -> Result<(DirectedEmbedding, SolveReport)> {
    cfg.validate()?;
    armijo.validate()?;
    let (left, right) = initial_pair(a, m, cfg)?;
    let rule = match cfg.step_size {
        Some(alpha) => StepRule::Fixed(alpha),
        None => StepRule::Armijo(*armijo),
    };
    let (left, right, report) = rgd_iterations(
        a.entries(),
        m.entries(),
        left,
        right,
        rule,
        cfg,
        cfg.max_iters,
    )?;
    let emb = rescale_columns(left.matrix(), right.matrix())?;
    Ok((emb, report))
}

/// Runs at most `steps` Riemannian GD iterations. Shared with the streaming tracker.
pub(crate) fn rgd_iterations(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    mut left: ManifoldPoint,
    mut right: ManifoldPoint,
    rule: StepRule,
    cfg: &SolverConfig,
    steps: usize,
) -> Result<(ManifoldPoint, ManifoldPoint, SolveReport)> {
    let mut s = residual(a, m, left.matrix(), right.matrix());
    let mut cost = frobenius_sq(&s);
    let initial = cost;
    let mut report = SolveReport::start(cost, cfg.record_trace);
    let mut violation = constraint_violation(left.matrix()).max(constraint_violation(right.matrix()));
    let mut last_alpha = match rule {
        StepRule::Armijo(c) => c.initial_step,
        StepRule::Fixed(alpha) => alpha,
    };
    for k in 0..steps {
        let (gl, gr) = euclid_grads(&s, left.matrix(), right.matrix());
        let gl = project_tangent(&left, &gl)?;
        let gr = project_tangent(&right, &gr)?;
        let g2 = gl.norm_squared() + gr.norm_squared();
        if g2 == 0.0 || cost == 0.0 {
            report.converged = true;
            break;
        }
        let step = |alpha: f64| -> Result<Option<(ManifoldPoint, ManifoldPoint)>> {
            let l = retract(&left, &tangent_unchecked(gl.matrix() * -alpha));
            let r = retract(&right, &tangent_unchecked(gr.matrix() * -alpha));
            match (l, r) {
                (Ok(l), Ok(r)) => Ok(Some((l, r))),
                (Err(Error::Retraction(_)), _) | (_, Err(Error::Retraction(_))) => Ok(None),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        };
        let accepted = match rule {
            StepRule::Armijo(c) => {
                let mut alpha = (2.0 * last_alpha).min(c.initial_step);
                let mut found = None;
                for _ in 0..=c.max_backtracks {
                    if let Some((l, r)) = step(alpha)? {
                        let s_new = residual(a, m, l.matrix(), r.matrix());
                        let f_new = frobenius_sq(&s_new);
                        if f_new <= cost - c.sufficient_decrease * alpha * g2 {
                            found = Some((l, r, s_new, f_new));
                            break;
                        }
                    }
                    alpha *= c.backtrack;
                }
                if found.is_some() {
                    last_alpha = alpha;
                }
                found
            }
            StepRule::Fixed(alpha0) => {
                let mut alpha = alpha0;
                let mut found = None;
                for _ in 0..30 {
                    if let Some((l, r)) = step(alpha)? {
                        let s_new = residual(a, m, l.matrix(), r.matrix());
                        let f_new = frobenius_sq(&s_new);
                        found = Some((l, r, s_new, f_new));
                        break;
                    }
                    alpha *= 0.5;
                }
                found
            }
        };
        let Some((l, r, s_new, f_new)) = accepted else {
            debug!("rgd: line search exhausted at iteration {k}");
            report.warnings += 1;
            report.converged = false;
            break;
        };
        if !f_new.is_finite() || f_new > 1e3 * initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence {
                cost: f_new,
                initial,
            });
        }
        left = l;
        right = r;
        s = s_new;
        violation = violation
            .max(constraint_violation(left.matrix()))
            .max(constraint_violation(right.matrix()));
        let rel = relative_decrease(cost, f_new);
        cost = f_new;
        report.iters = k + 1;
        report.push(cost);
        if cost == 0.0 || rel.abs() < cfg.tol_rel_cost {
            report.converged = true;
            break;
        }
    }
    report.max_constraint_violation = Some(violation);
    Ok((left, right, report))
}

/// Equalizes column norms across the pair: `Xˡ ← XˡS^{-1/2}`, `Xʳ ← XʳS^{1/2}` with
/// `s_k = ‖xˡ_k‖/‖xʳ_k‖`. The product `Xˡ(Xʳ)ᵀ` is unchanged.
pub fn rescale_columns(left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<DirectedEmbedding> {
    if left.shape() != right.shape() {
        return Err(shape_mismatch(
            format!("{:?}", left.shape()),
            format!("{:?}", right.shape()),
        ));
    }
    let mut l = left.clone();
    let mut r = right.clone();
    for k in 0..left.ncols() {
        let nl = left.column(k).norm();
        let nr = right.column(k).norm();
        if nl <= 0.0 || nr <= 0.0 || !nl.is_finite() || !nr.is_finite() {
            return Err(Error::DegenerateColumn(k));
        }
        let root_s = (nl / nr).sqrt();
        l.column_mut(k).unscale_mut(root_s);
        r.column_mut(k).scale_mut(root_s);
    }
    DirectedEmbedding::from_pair(l, r)
}

/// Relative tolerance for [`verify_ambiguity_reduction`].
pub const AMBIGUITY_TOL: f64 = 1e-8;

/// Largest entry of `(XˡT)ᵀXˡT − (XʳT⁻ᵀ)ᵀXʳT⁻ᵀ`, relative to the largest Gram diagonal entry.
///
/// For a constrained pair with Gram `D`, this vanishes exactly when `TTᵀ = I`: the condition
/// reads `SDS = D` with `S = TTᵀ` positive definite, and the unique positive square root of
/// `(D^{1/2}SD^{1/2})² = D²` forces `S = I`.
pub fn ambiguity_violation(
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
    t: &DMatrix<f64>,
) -> Result<f64> {
    let d = left.ncols();
    if t.shape() != (d, d) || right.shape() != left.shape() {
        return Err(shape_mismatch(format!("{d}x{d} transform"), format!("{:?}", t.shape())));
    }
    if gram_gap(left, right) > 1e-6 {
        return Err(Error::Contract(
            "pair does not satisfy the diagonal-and-equal Gram constraint".into(),
        ));
    }
    let t_inv = t.clone().try_inverse().ok_or(Error::Singular { pivot: 0 })?;
    if t_inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { pivot: 0 });
    }
    let yl = left * t;
    let yr = right * t_inv.transpose();
    let gl = yl.tr_mul(&yl);
    let gr = yr.tr_mul(&yr);
    let scale = gl.diagonal().amax().max(gr.diagonal().amax());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((gl - gr).amax() / scale)
}

/// True iff the transformed pair `(XˡT, XʳT⁻ᵀ)` keeps equal Gram matrices, which for a
/// constrained input pair holds exactly for orthonormal `T`.
pub fn verify_ambiguity_reduction(
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
    t: &DMatrix<f64>,
) -> Result<bool> {
    Ok(ambiguity_violation(left, right, t)? <= AMBIGUITY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{hollow_mask, sample_rdpg, sbm_probability, SbmConfig};
    use crate::undirected::cost_undirected;
    use approx::assert_relative_eq;

    fn directed_sbm(seed: u64) -> AdjacencyMatrix {
        let pi = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.3, 0.5]);
        let cfg = SbmConfig::new(vec![20, 30], pi, true, seed).unwrap();
        sample_rdpg(&sbm_probability(&cfg).unwrap(), true, seed).unwrap()
    }

    #[test]
    fn cost_examples() {
        let a = directed_sbm(1);
        let m = hollow_mask(50, true).unwrap();
        let z = DMatrix::zeros(50, 2);
        assert_eq!(cost_directed(&a, &m, &z, &z).unwrap(), a.edge_count() as f64);

        let l = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 0.5]);
        let r = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let mut exact = &l * r.transpose();
        exact.fill_diagonal(0.0);
        let a = AdjacencyMatrix::new(exact, true).unwrap();
        assert!(cost_directed(&a, &hollow_mask(3, true).unwrap(), &l, &r).unwrap() < 1e-28);
    }

    #[test]
    fn symmetric_reduction() {
        let cfg = SbmConfig::two_block([10, 15], 0.5, 0.2, 0).unwrap();
        let a = sample_rdpg(&sbm_probability(&cfg).unwrap(), false, 2).unwrap();
        let m = hollow_mask(25, false).unwrap();
        let x = DMatrix::from_fn(25, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1);
        let directed = cost_directed(&a, &m, &x, &x).unwrap();
        let undirected = cost_undirected(&a, &m, &x).unwrap();
        assert_relative_eq!(directed, undirected, max_relative = 1e-14);

        let (gl, gr) = grad_directed(&a, &m, &x, &x).unwrap();
        let g = crate::undirected::grad_undirected(&a, &m, &x).unwrap();
        assert!((gl + gr - g).amax() < 1e-12);
    }

    #[test]
    fn ase_directed_on_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 2.0]);
        let (l, r) = ase_directed_matrix(&a, 1).unwrap();
        assert_relative_eq!(l[(0, 0)], 5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r[(0, 0)], 5f64.sqrt(), epsilon = 1e-12);
        assert!(l[(1, 0)].abs() < 1e-12 && r[(1, 0)].abs() < 1e-12);
        assert!(matches!(
            ase_directed_matrix(&DMatrix::zeros(3, 3), 1),
            Err(Error::Dimension { usable: 0, .. })
        ));
    }

    #[test]
    fn ase_directed_symmetric_psd_gives_equal_factors() {
        let g = DMatrix::from_fn(6, 2, |i, j| 1.0 + (i as f64) * 0.3 - (j as f64) * 0.7 * (i % 2) as f64);
        let a = &g * g.transpose();
        let (l, r) = ase_directed_matrix(&a, 2).unwrap();
        assert!((l - r).amax() < 1e-8);
    }

    #[test]
    fn rescale_examples() {
        let l = DMatrix::from_row_slice(1, 1, &[2.0]);
        let r = DMatrix::from_row_slice(1, 1, &[8.0]);
        let e = rescale_columns(&l, &r).unwrap();
        assert_relative_eq!(e.left()[(0, 0)], 4.0, epsilon = 1e-14);
        assert_relative_eq!(e.right()[(0, 0)], 4.0, epsilon = 1e-14);

        let l = DMatrix::from_row_slice(2, 1, &[3.0, 4.0]);
        let r = DMatrix::from_row_slice(2, 1, &[0.0, 5.0]);
        let e = rescale_columns(&l, &r).unwrap();
        assert_eq!(e.left(), &l);
        assert_eq!(e.right(), &r);

        let zero = DMatrix::zeros(2, 1);
        assert!(matches!(rescale_columns(&l, &zero), Err(Error::DegenerateColumn(0))));
    }

    #[test]
    fn ambiguity_examples() {
        let a = directed_sbm(3);
        let e = ase_directed(&a, 2).unwrap();
        let (l, r) = (e.left(), e.right());
        assert!(verify_ambiguity_reduction(l, r, &DMatrix::identity(2, 2)).unwrap());
        let th: f64 = 0.4;
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        assert!(verify_ambiguity_reduction(l, r, &rot).unwrap());
        let stretch = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert!(!verify_ambiguity_reduction(l, r, &stretch).unwrap());
        assert!(matches!(
            verify_ambiguity_reduction(l, r, &DMatrix::zeros(2, 2)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn rgd_zero_gradient_returns_init() {
        // Exact rank-1 digraph with a full mask including the diagonal.
        let l = DMatrix::from_row_slice(3, 1, &[1.0, 0.5, 0.2]);
        let r = DMatrix::from_row_slice(3, 1, &[0.3, 1.0, 0.4]);
        let mut exact = &l * r.transpose();
        let full = ObservationMask::new(DMatrix::from_element(3, 3, 1.0).map(|v| v), true);
        assert!(full.is_err(), "masks keep a zero diagonal");
        exact.fill_diagonal(0.0);
        let a = AdjacencyMatrix::new(exact.clone(), true).unwrap();
        // Warm start at a stationary point of the hollow-mask cost: zero outer product.
        let m = ObservationMask::new(DMatrix::zeros(3, 3), true).unwrap();
        let cfg = SolverConfig::new(1).with_init(Init::WarmPair(l.clone(), r.clone()));
        let (e, report) = solve_riemannian_gd(&a, &m, &cfg, &ArmijoConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iters, 0);
        assert!((e.left() * e.right().transpose() - &l * r.transpose()).amax() < 1e-14);
    }

    #[test]
    fn rgd_descends_from_ase() {
        let a = directed_sbm(4);
        let m = hollow_mask(50, true).unwrap();
        let init = ase_directed(&a, 2).unwrap();
        let ase_cost = cost_directed(&a, &m, init.left(), init.right()).unwrap();
        let cfg = SolverConfig::new(2).with_trace();
        let (e, report) = solve_riemannian_gd(&a, &m, &cfg, &ArmijoConfig::default()).unwrap();
        assert!(report.final_cost <= ase_cost + 1e-9);
        let trace = report.trace.as_ref().unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.max_constraint_violation.unwrap() <= 1e-8);
        assert!(e.gram_gap() < 1e-6);
    }

    #[test]
    fn rgd_rejects_off_manifold_warm_start() {
        let a = directed_sbm(5);
        let m = hollow_mask(50, true).unwrap();
        let bad = DMatrix::from_element(50, 2, 1.0);
        let cfg = SolverConfig::new(2).with_init(Init::WarmPair(bad.clone(), bad));
        assert!(matches!(
            solve_riemannian_gd(&a, &m, &cfg, &ArmijoConfig::default()),
            Err(Error::NotOnManifold(_))
        ));
    }
}
