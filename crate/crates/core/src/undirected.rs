//! Solvers for the masked symmetric factorization `min ‖M∘(A − XXᵀ)‖_F²`.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::graph::{rng_from_seed, AdjacencyMatrix, ObservationMask};
use crate::numerics::{
    frobenius_sq, max_symmetric_eigenvalue, solve_spd, spectral_radius_estimate, top_eigen, top_svd,
    EigenOrder,
};

/// Default relative cost-decrease threshold for every solver.
pub const DEFAULT_TOL: f64 = 1e-7;
/// A run whose cost exceeds this multiple of its initial cost is declared divergent.
pub const DIVERGENCE_FACTOR: f64 = 1e3;
/// Relative ridge used when a row system in BCD is singular.
pub const RIDGE: f64 = 1e-8;

/// Latent positions, one row per node, with the external node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    x: DMatrix<f64>,
    ids: Vec<String>,
}

pub(crate) fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

impl EmbeddingMatrix {
    pub fn new(x: DMatrix<f64>, ids: Vec<String>) -> Result<Self> {
        if ids.len() != x.nrows() {
            return Err(shape_mismatch(
                format!("{} node ids", x.nrows()),
                ids.len(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("embedding has non-finite entries".into()));
        }
        Ok(Self { x, ids })
    }

    /// Wraps `x` with ids `"0"..="N-1"`.
    pub fn from_matrix(x: DMatrix<f64>) -> Self {
        let ids = default_ids(x.nrows());
        Self { x, ids }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(shape_mismatch(self.n(), ids.len()));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn into_parts(self) -> (DMatrix<f64>, Vec<String>) {
        (self.x, self.ids)
    }
}

/// How a solver picks its starting point.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Adjacency spectral embedding of the masked adjacency.
    Spectral,
    /// Gaussian entries; `scale: None` matches the graph's mean degree.
    Random { scale: Option<f64>, seed: u64 },
    /// Undirected warm start.
    Warm(DMatrix<f64>),
    /// Directed warm start (outgoing, incoming).
    WarmPair(DMatrix<f64>, DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub d: usize,
    pub max_iters: usize,
    /// Stop when the relative cost decrease of one iteration (or BCD cycle) drops below this.
    pub tol_rel_cost: f64,
    /// Fixed step for GD; `None` picks one from the spectrum of `A`.
    pub step_size: Option<f64>,
    pub init: Init,
    pub record_trace: bool,
}

impl SolverConfig {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            max_iters: 10_000,
            tol_rel_cost: DEFAULT_TOL,
            step_size: None,
            init: Init::Spectral,
            record_trace: false,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_rel_cost = tol;
        self
    }

    pub fn with_step_size(mut self, alpha: f64) -> Self {
        self.step_size = Some(alpha);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        if !(self.tol_rel_cost > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if let Some(alpha) = self.step_size {
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::InvalidConfig("step size must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub final_cost: f64,
    pub initial_cost: f64,
    pub iters: usize,
    pub converged: bool,
    /// Singular-system fallbacks (BCD) or exhausted line searches (Riemannian GD).
    pub warnings: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_constraint_violation: Option<f64>,
    #[serde(skip)]
    pub trace: Option<Vec<f64>>,
}

impl SolveReport {
    pub(crate) fn start(initial_cost: f64, record: bool) -> Self {
        Self {
            final_cost: initial_cost,
            initial_cost,
            iters: 0,
            converged: false,
            warnings: 0,
            max_constraint_violation: None,
            trace: record.then(|| vec![initial_cost]),
        }
    }

    pub(crate) fn push(&mut self, cost: f64) {
        self.final_cost = cost;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(cost);
        }
    }
}

/// Relative decrease used by every stopping rule. A zero previous cost counts as converged.
pub(crate) fn relative_decrease(prev: f64, next: f64) -> f64 {
    if prev <= 0.0 {
        0.0
    } else {
        (prev - next) / prev
    }
}

fn check_problem(a: &AdjacencyMatrix, m: &ObservationMask, x: &DMatrix<f64>) -> Result<()> {
    let n = a.n();
    if m.n() != n {
        return Err(shape_mismatch(format!("{n}x{n} mask"), format!("{0}x{0}", m.n())));
    }
    if x.nrows() != n {
        return Err(shape_mismatch(format!("{n} embedding rows"), x.nrows()));
    }
    Ok(())
}

/// `M∘(XXᵀ − A)`.
pub(crate) fn masked_residual(a: &DMatrix<f64>, m: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = x * x.transpose();
    s -= a;
    s.component_mul_assign(m);
    s
}

/// `‖M∘(A − XXᵀ)‖_F²`.
pub fn cost_undirected(a: &AdjacencyMatrix, m: &ObservationMask, x: &DMatrix<f64>) -> Result<f64> {
    check_problem(a, m, x)?;
    Ok(frobenius_sq(&masked_residual(a.entries(), m.entries(), x)))
}

/// `4[M∘(XXᵀ − A)]X`.
pub fn grad_undirected(
    a: &AdjacencyMatrix,
    m: &ObservationMask,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_problem(a, m, x)?;
    Ok(masked_residual(a.entries(), m.entries(), x) * x * 4.0)
}

/// Adjacency spectral embedding `X̂ = V̂ Λ̂^{1/2}` from the `d` largest algebraic eigenvalues.
///
/// Fails when fewer than `d` of them are positive.
pub fn ase(a: &AdjacencyMatrix, d: usize) -> Result<EmbeddingMatrix> {
    ase_matrix(a.entries(), d).map(EmbeddingMatrix::from_matrix)
}

pub(crate) fn ase_matrix(a: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let pair = top_eigen(a, d, EigenOrder::Algebraic)?;
    let floor = 1e-12 * a.amax().max(f64::MIN_POSITIVE) * a.nrows() as f64;
    let usable = pair.values.iter().filter(|&&l| l > floor).count();
    if usable < d {
        return Err(Error::Dimension {
            requested: d,
            usable,
        });
    }
    let mut x = pair.vectors;
    for (k, mut col) in x.column_iter_mut().enumerate() {
        col *= pair.values[k].sqrt();
    }
    Ok(x)
}

/// Gaussian initial embedding. Default scale `√(mean degree / (N·d))` puts `XXᵀ` on the scale of `A`.
pub(crate) fn random_init(a: &DMatrix<f64>, d: usize, scale: Option<f64>, seed: u64) -> DMatrix<f64> {
    let n = a.nrows();
    let scale = scale.unwrap_or_else(|| {
        let mean_degree = a.sum() / n.max(1) as f64;
        (mean_degree / (n.max(1) * d) as f64).sqrt()
    });
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(n, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn initial_point(a: &AdjacencyMatrix, m: &ObservationMask, cfg: &SolverConfig) -> Result<DMatrix<f64>> {
    let n = a.n();
    if cfg.d > n {
        return Err(Error::InvalidSize(format!(
            "dimension {} exceeds node count {n}",
            cfg.d
        )));
    }
    let masked = || a.entries().component_mul(m.entries());
    let x = match &cfg.init {
        Init::Spectral => ase_matrix(&masked(), cfg.d)?,
        Init::Random { scale, seed } => random_init(&masked(), cfg.d, *scale, *seed),
        Init::Warm(x) => {
            if x.shape() != (n, cfg.d) {
                return Err(shape_mismatch(
                    format!("{n}x{} warm start", cfg.d),
                    format!("{}x{}", x.nrows(), x.ncols()),
                ));
            }
            x.clone()
        }
        Init::WarmPair(..) => {
            return Err(Error::InvalidConfig(
                "undirected solvers take a single warm-start matrix".into(),
            ))
        }
    };
    Ok(x)
}

/// Step size `1/(8L)` with `L` the larger of `ρ(M∘A)` and `‖X₀‖₂²`.
///
/// At an exact fit the Hessian of the factored cost has norm about `8λ_max`, so `2/(8λ_max)`
/// is the stability limit; `1/(8L)` stays inside it with a factor-two margin.
pub fn default_step_size(a_masked: &DMatrix<f64>, x0: &DMatrix<f64>) -> f64 {
    let rho = spectral_radius_estimate(a_masked, 200);
    let gram = x0.transpose() * x0;
    let x_sq = max_symmetric_eigenvalue(&gram);
    let l = rho.max(x_sq);
    if l > 0.0 {
        1.0 / (8.0 * l)
    } else {
        1.0
    }
}

/// Factored gradient descent `X ← X − α∇f(X)`.
pub fn solve_gd(
    a: &AdjacencyMatrix,
    m: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(EmbeddingMatrix, SolveReport)> {
    cfg.validate()?;
    let x0 = initial_point(a, m, cfg)?;
    let (x, report) = gd_iterations(a.entries(), m.entries(), x0, cfg, cfg.max_iters)?;
    Ok((EmbeddingMatrix::from_matrix(x), report))
}

/// Runs at most `steps` GD iterations from `x`; shared with the streaming tracker.
pub(crate) fn gd_iterations(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    mut x: DMatrix<f64>,
    cfg: &SolverConfig,
    steps: usize,
) -> Result<(DMatrix<f64>, SolveReport)> {
    let alpha = match cfg.step_size {
        Some(alpha) => alpha,
        None => default_step_size(&a.component_mul(m), &x),
    };
    let mut residual = masked_residual(a, m, &x);
    let mut cost = frobenius_sq(&residual);
    let initial = cost;
    let mut report = SolveReport::start(cost, cfg.record_trace);
    debug!("gd: alpha {alpha:e}, initial cost {cost:e}");
    if cost == 0.0 {
        report.converged = true;
        return Ok((x, report));
    }
    for k in 0..steps {
        let grad = &residual * &x * 4.0;
        x -= grad * alpha;
        residual = masked_residual(a, m, &x);
        let next = frobenius_sq(&residual);
        if !next.is_finite() || next > DIVERGENCE_FACTOR * initial {
            return Err(Error::Divergence {
                cost: next,
                initial,
            });
        }
        let rel = relative_decrease(cost, next);
        cost = next;
        report.iters = k + 1;
        report.push(cost);
        if cost == 0.0 || rel.abs() < cfg.tol_rel_cost {
            report.converged = true;
            break;
        }
    }
    Ok((x, report))
}

/// Exact minimizer of the cost over row `i` with every other row fixed: solves
/// `(XᵀX − x_i x_iᵀ) x = Xᵀ A_iᵀ` for the hollow mask.
pub fn bcd_row_update(a: &AdjacencyMatrix, x: &DMatrix<f64>, i: usize) -> Result<DVector<f64>> {
    if x.nrows() != a.n() {
        return Err(shape_mismatch(a.n(), x.nrows()));
    }
    if i >= a.n() {
        return Err(Error::InvalidSize(format!("row {i} outside {} nodes", a.n())));
    }
    let xi = x.row(i).transpose();
    let r = x.transpose() * x - &xi * xi.transpose();
    let b = x.transpose() * a.entries().row(i).transpose();
    solve_spd(&r, &b)
}

fn ridge_solve(r: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let d = r.nrows();
    let lambda = (RIDGE * r.trace() / d as f64).max(1e-12);
    let shifted = r + DMatrix::identity(d, d) * lambda;
    solve_spd(&shifted, b).unwrap_or_else(|_| DVector::zeros(d))
}

/// Row-`i` share of the hollow-mask cost, `Σ_{j≠i} (A_ij − x_iᵀx_j)²`.
fn row_cost(a: &DMatrix<f64>, m: Option<&DMatrix<f64>>, x: &DMatrix<f64>, i: usize) -> f64 {
    let xi = x.row(i).transpose();
    let fitted = x * xi;
    (0..a.nrows())
        .filter(|&j| j != i)
        .map(|j| {
            let w = m.map_or(1.0, |m| m[(i, j)]);
            w * (a[(i, j)] - fitted[j]).powi(2)
        })
        .sum()
}

/// Cyclic row-wise block coordinate descent for the hollow mask, keeping `R = XᵀX` up to date
/// across row updates.
pub fn solve_bcd(a: &AdjacencyMatrix, cfg: &SolverConfig) -> Result<(EmbeddingMatrix, SolveReport)> {
    let m = ObservationMask::hollow(a.n(), a.directed())?;
    solve_bcd_masked(a, &m, cfg)
}

/// Block coordinate descent under an arbitrary symmetric mask. The hollow mask takes the
/// `O(Nd)`-per-row path; general masks rebuild each row system in `O(Nd²)`.
pub fn solve_bcd_masked(
    a: &AdjacencyMatrix,
    m: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(EmbeddingMatrix, SolveReport)> {
    cfg.validate()?;
    if !a.is_symmetric() || m.directed() && !is_mask_symmetric(m) {
        return Err(Error::Contract("BCD needs a symmetric adjacency and mask".into()));
    }
    let x0 = initial_point(a, m, cfg)?;
    let (x, report) = bcd_cycles(a.entries(), m, x0, cfg, cfg.max_iters)?;
    Ok((EmbeddingMatrix::from_matrix(x), report))
}

fn is_mask_symmetric(m: &ObservationMask) -> bool {
    let e = m.entries();
    e == &e.transpose()
}

pub(crate) fn bcd_cycles(
    a: &DMatrix<f64>,
    m: &ObservationMask,
    mut x: DMatrix<f64>,
    cfg: &SolverConfig,
    cycles: usize,
) -> Result<(DMatrix<f64>, SolveReport)> {
    let n = a.nrows();
    let mask = (!m.is_hollow()).then(|| m.entries());
    let mut cost = frobenius_sq(&masked_residual(a, m.entries(), &x));
    let mut report = SolveReport::start(cost, cfg.record_trace);
    for cycle in 0..cycles {
        let mut r = x.transpose() * &x;
        for i in 0..n {
            let before = cfg!(debug_assertions).then(|| row_cost(a, mask, &x, i));
            let xi = x.row(i).transpose();
            let (system, rhs) = match mask {
                None => {
                    r -= &xi * xi.transpose();
                    (r.clone(), x.tr_mul(&a.column(i)))
                }
                Some(mask) => {
                    let mut system = DMatrix::zeros(cfg.d, cfg.d);
                    let mut rhs = DVector::zeros(cfg.d);
                    for j in (0..n).filter(|&j| j != i && mask[(i, j)] != 0.0) {
                        let xj = x.row(j).transpose();
                        system.ger(1.0, &xj, &xj, 1.0);
                        rhs.axpy(a[(i, j)], &xj, 1.0);
                    }
                    (system, rhs)
                }
            };
            let (xi_new, exact) = match solve_spd(&system, &rhs) {
                Ok(v) => (v, true),
                Err(_) => {
                    report.warnings += 1;
                    (ridge_solve(&system, &rhs), false)
                }
            };
            x.set_row(i, &xi_new.transpose());
            if mask.is_none() {
                r += &xi_new * xi_new.transpose();
            }
            if let (Some(before), true) = (before, exact) {
                let after = row_cost(a, mask, &x, i);
                debug_assert!(
                    after <= before + 1e-9 * (1.0 + before),
                    "row {i} update raised its cost from {before} to {after}"
                );
            }
        }
        let next = frobenius_sq(&masked_residual(a, m.entries(), &x));
        let rel = relative_decrease(cost, next);
        cost = next;
        report.iters = cycle + 1;
        report.push(cost);
        if cost == 0.0 || rel < cfg.tol_rel_cost {
            report.converged = true;
            break;
        }
    }
    if report.warnings > 0 {
        warn!("bcd: {} singular row systems solved with a ridge", report.warnings);
    }
    Ok((x, report))
}

/// Position of the largest gap in the magnitude scree of the top `d_max` eigenvalues
/// (singular values for directed graphs).
pub fn elbow_dimension(a: &AdjacencyMatrix, d_max: usize) -> Result<usize> {
    let d_max = d_max.min(a.n());
    if d_max <= 1 {
        return Ok(1);
    }
    let mags: Vec<f64> = if a.directed() {
        top_svd(a.entries(), d_max)?.values.iter().copied().collect()
    } else {
        let pair = top_eigen(a.entries(), d_max, EigenOrder::Magnitude)?;
        pair.values.iter().map(|v| v.abs()).collect()
    };
    let mut best = (1, 0.0);
    for k in 0..d_max - 1 {
        let gap = mags[k] - mags[k + 1];
        if gap > best.1 {
            best = (k + 1, gap);
        }
    }
    Ok(best.0)
}
