//! Graph and mask data model, RDPG sampling and synthetic generators.

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_mismatch, Error, Result};
use crate::numerics::{top_eigen, EigenOrder};

/// Seeded generator used by every sampler in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(shape_mismatch(
            format!("square {what}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m.nrows())
}

fn first_asymmetry(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if m[(i, j)] != m[(j, i)] {
                return Some((i, j));
            }
        }
    }
    None
}

/// Observed edge weights of a graph without self loops.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    entries: DMatrix<f64>,
    directed: bool,
}

impl AdjacencyMatrix {
    /// Validates and wraps a weight matrix: square, finite, nonnegative, zero diagonal,
    /// and exactly symmetric when `directed` is false.
    pub fn new(entries: DMatrix<f64>, directed: bool) -> Result<Self> {
        let n = check_square(&entries, "adjacency")?;
        for (idx, &v) in entries.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                let (i, j) = (idx % n, idx / n);
                return Err(Error::Domain(format!(
                    "adjacency entry ({i},{j}) = {v} must be finite and nonnegative"
                )));
            }
        }
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(Error::Domain(format!("self loop at node {i}")));
            }
        }
        if !directed {
            if let Some((i, j)) = first_asymmetry(&entries) {
                return Err(Error::Domain(format!(
                    "undirected adjacency is not symmetric at ({i},{j})"
                )));
            }
        }
        Ok(Self { entries, directed })
    }

    pub fn empty(n: usize, directed: bool) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
            directed,
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        first_asymmetry(&self.entries).is_none()
    }

    /// Number of nonzero entries, counting each undirected edge once.
    pub fn edge_count(&self) -> usize {
        let nnz = self.entries.iter().filter(|&&v| v != 0.0).count();
        if self.directed {
            nnz
        } else {
            nnz / 2
        }
    }

    /// Fraction of off-diagonal ordered pairs that carry an edge.
    pub fn density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let nnz = self.entries.iter().filter(|&&v| v != 0.0).count();
        nnz as f64 / (n * (n - 1)) as f64
    }

    /// Keeps the listed rows/columns, in the given order.
    pub fn select(&self, keep: &[usize]) -> Self {
        Self {
            entries: select_square(&self.entries, keep),
            directed: self.directed,
        }
    }
}

pub(crate) fn select_square(m: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])])
}

/// Binary matrix of observed pairs. Stored as 0.0/1.0 so it can multiply residuals directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    entries: DMatrix<f64>,
    directed: bool,
}

impl ObservationMask {
    pub fn new(entries: DMatrix<f64>, directed: bool) -> Result<Self> {
        let n = check_square(&entries, "mask")?;
        if entries.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain("mask entries must be 0 or 1".into()));
        }
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(Error::Domain(format!("mask diagonal at {i} must be 0")));
            }
        }
        if !directed {
            if let Some((i, j)) = first_asymmetry(&entries) {
                return Err(Error::Domain(format!(
                    "undirected mask is not symmetric at ({i},{j})"
                )));
            }
        }
        Ok(Self { entries, directed })
    }

    /// The default mask `1·1ᵀ − I`.
    pub fn hollow(n: usize, directed: bool) -> Result<Self> {
        hollow_mask(n, directed)
    }

    /// Hollow mask with the listed pairs marked unobserved. Undirected masks clear both orientations.
    pub fn with_unobserved(n: usize, directed: bool, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut mask = hollow_mask(n, directed)?;
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::InvalidSize(format!(
                    "unobserved pair ({i},{j}) outside a {n}-node mask"
                )));
            }
            mask.entries[(i, j)] = 0.0;
            if !directed {
                mask.entries[(j, i)] = 0.0;
            }
        }
        Ok(mask)
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn observed_count(&self) -> usize {
        self.entries.iter().filter(|&&v| v != 0.0).count()
    }

    /// True when the mask equals the hollow default.
    pub fn is_hollow(&self) -> bool {
        let n = self.n();
        (0..n).all(|j| (0..n).all(|i| self.entries[(i, j)] == if i == j { 0.0 } else { 1.0 }))
    }

    pub fn select(&self, keep: &[usize]) -> Self {
        Self {
            entries: select_square(&self.entries, keep),
            directed: self.directed,
        }
    }
}

/// Returns the all-ones-off-diagonal mask of size `n`.
pub fn hollow_mask(n: usize, directed: bool) -> Result<ObservationMask> {
    if n == 0 {
        return Err(Error::InvalidSize("mask needs at least one node".into()));
    }
    let entries = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
    Ok(ObservationMask { entries, directed })
}

/// Expected adjacency `E[A]`. Entries lie in `[0, 1]` for Bernoulli graphs; weighted
/// models only need them nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    entries: DMatrix<f64>,
}

impl ProbabilityMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_square(&entries, "probability matrix")?;
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(
                "probability entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { entries })
    }

    /// `X Yᵀ`; pass the same matrix twice for the undirected model.
    pub fn from_latent(left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<Self> {
        if left.shape() != right.shape() {
            return Err(shape_mismatch(
                format!("{:?}", left.shape()),
                format!("{:?}", right.shape()),
            ));
        }
        Self::new((left * right.transpose()).map(|v| v.max(0.0)))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }
}

/// Draws an adjacency matrix with independent `Bernoulli(P_ij)` entries.
///
/// Undirected graphs draw each unordered pair once and mirror it. The diagonal is never sampled.
pub fn sample_rdpg(p: &ProbabilityMatrix, directed: bool, seed: u64) -> Result<AdjacencyMatrix> {
    sample_rdpg_with(p, directed, &mut rng_from_seed(seed))
}

pub fn sample_rdpg_with<R: Rng + ?Sized>(
    p: &ProbabilityMatrix,
    directed: bool,
    rng: &mut R,
) -> Result<AdjacencyMatrix> {
    let probs = p.entries();
    let n = probs.nrows();
    if let Some(v) = probs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("probability {v} outside [0, 1]")));
    }
    if !directed {
        if let Some((i, j)) = first_asymmetry(probs) {
            return Err(Error::Domain(format!(
                "undirected sampling needs a symmetric P (differs at ({i},{j}))"
            )));
        }
    }
    let mut a = DMatrix::zeros(n, n);
    if directed {
        // Row-major draw order so the stream does not depend on storage layout.
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < probs[(i, j)] {
                    a[(i, j)] = 1.0;
                }
            }
        }
    } else {
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < probs[(i, j)] {
                    a[(i, j)] = 1.0;
                    a[(j, i)] = 1.0;
                }
            }
        }
    }
    Ok(AdjacencyMatrix {
        entries: a,
        directed,
    })
}

/// Stochastic block model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmConfig {
    pub sizes: Vec<usize>,
    pub pi: DMatrix<f64>,
    pub directed: bool,
    pub seed: u64,
}

impl SbmConfig {
    pub fn new(sizes: Vec<usize>, pi: DMatrix<f64>, directed: bool, seed: u64) -> Result<Self> {
        let cfg = Self {
            sizes,
            pi,
            directed,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Two blocks with `p` within and `q` across.
    pub fn two_block(sizes: [usize; 2], p: f64, q: f64, seed: u64) -> Result<Self> {
        Self::new(
            sizes.to_vec(),
            DMatrix::from_row_slice(2, 2, &[p, q, q, p]),
            false,
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.sizes.len();
        if k == 0 || self.sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig(
                "community sizes must be positive and non-empty".into(),
            ));
        }
        if self.pi.shape() != (k, k) {
            return Err(shape_mismatch(
                format!("{k}x{k} block matrix"),
                format!("{}x{}", self.pi.nrows(), self.pi.ncols()),
            ));
        }
        if let Some(v) = self.pi.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("block probability {v} outside [0, 1]")));
        }
        if !self.directed && first_asymmetry(&self.pi).is_some() {
            return Err(Error::InvalidConfig(
                "undirected SBM needs a symmetric block matrix".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Community label of every node, blocks laid out contiguously.
    pub fn labels(&self) -> Vec<usize> {
        labels_from_sizes(&self.sizes)
    }
}

pub fn labels_from_sizes(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect()
}

/// Block-constant `P_ij = Π[c(i), c(j)]` for the contiguous layout of `cfg`.
pub fn sbm_probability(cfg: &SbmConfig) -> Result<ProbabilityMatrix> {
    cfg.validate()?;
    block_probability(&cfg.labels(), &cfg.pi)
}

/// Block-constant probabilities for arbitrary label assignments.
pub fn block_probability(labels: &[usize], pi: &DMatrix<f64>) -> Result<ProbabilityMatrix> {
    if let Some(&c) = labels.iter().find(|&&c| c >= pi.nrows()) {
        return Err(Error::InvalidConfig(format!(
            "label {c} has no row in a {}-block matrix",
            pi.nrows()
        )));
    }
    if let Some(v) = pi.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("block probability {v} outside [0, 1]")));
    }
    let n = labels.len();
    ProbabilityMatrix::new(DMatrix::from_fn(n, n, |i, j| pi[(labels[i], labels[j])]))
}

/// Latent positions reproducing a positive semidefinite block matrix:
/// row `i` is row `c(i)` of `V Λ^{1/2}` from the eigendecomposition of `Π`.
///
/// Only the components with positive eigenvalues are kept, so the width is `rank(Π)`.
pub fn sbm_latent_positions(labels: &[usize], pi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = check_square(pi, "block matrix")?;
    if first_asymmetry(pi).is_some() {
        return Err(Error::InvalidConfig("latent positions need a symmetric Π".into()));
    }
    let eig = top_eigen(pi, k, EigenOrder::Algebraic)?;
    let scale = pi.amax().max(1.0);
    if eig.values.iter().any(|&l| l < -1e-12 * scale) {
        return Err(Error::Domain("block matrix is not positive semidefinite".into()));
    }
    let rank = eig.values.iter().filter(|&&l| l > 1e-12 * scale).count();
    let mut factor = DMatrix::zeros(k, rank);
    for c in 0..rank {
        let s = eig.values[c].sqrt();
        for r in 0..k {
            factor[(r, c)] = eig.vectors[(r, c)] * s;
        }
    }
    if let Some(&c) = labels.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidConfig(format!("label {c} outside {k} blocks")));
    }
    Ok(DMatrix::from_fn(labels.len(), rank, |i, j| factor[(labels[i], j)]))
}

/// Erdős–Rényi expected adjacency with zero diagonal.
pub fn erdos_renyi_probability(n: usize, p: f64) -> Result<ProbabilityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("edge probability {p} outside [0, 1]")));
    }
    ProbabilityMatrix::new(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { p }))
}

/// Bipartite senator/law voting digraph.
///
/// Communities in order: party-1 senators, party-2 senators, party-1 laws,
/// party-2 laws, bipartisan laws. Edges only go from senators to laws.
#[derive(Debug, Clone, PartialEq)]
pub struct SenateConfig {
    pub party_senators: [usize; 2],
    pub laws: [usize; 3],
    pub pi: DMatrix<f64>,
    pub seed: u64,
}

impl Default for SenateConfig {
    fn default() -> Self {
        #[rustfmt::skip]
        let pi = DMatrix::from_row_slice(5, 5, &[
            0.0, 0.0, 0.9, 0.01, 0.2,
            0.0, 0.0, 0.1, 0.8,  0.3,
            0.0, 0.0, 0.0, 0.0,  0.0,
            0.0, 0.0, 0.0, 0.0,  0.0,
            0.0, 0.0, 0.0, 0.0,  0.0,
        ]);
        Self {
            party_senators: [50, 50],
            laws: [50, 200, 40],
            pi,
            seed: 0,
        }
    }
}

impl SenateConfig {
    pub fn sizes(&self) -> Vec<usize> {
        let [s1, s2] = self.party_senators;
        let [l1, l2, l3] = self.laws;
        vec![s1, s2, l1, l2, l3]
    }

    pub fn n(&self) -> usize {
        self.sizes().iter().sum()
    }

    pub fn labels(&self) -> Vec<usize> {
        labels_from_sizes(&self.sizes())
    }
}

/// Samples the senate digraph described by `cfg`.
pub fn senate_graph(cfg: &SenateConfig) -> Result<AdjacencyMatrix> {
    if cfg.pi.shape() != (5, 5) {
        return Err(shape_mismatch(
            "5x5 block matrix",
            format!("{}x{}", cfg.pi.nrows(), cfg.pi.ncols()),
        ));
    }
    for r in 0..5 {
        for c in 0..5 {
            let senator_to_law = r < 2 && c >= 2;
            if !senator_to_law && cfg.pi[(r, c)] != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "senate block matrix must be zero outside the senator-to-law block, got Π[{r},{c}] = {}",
                    cfg.pi[(r, c)]
                )));
            }
        }
    }
    let p = block_probability(&cfg.labels(), &cfg.pi)?;
    sample_rdpg(&p, true, cfg.seed)
}

/// Moves one uniformly chosen node to a uniformly chosen different community.
pub fn dynamic_sbm_step(labels: &[usize], n_communities: usize, seed: u64) -> Result<Vec<usize>> {
    dynamic_sbm_step_with(labels, n_communities, &mut rng_from_seed(seed))
}

pub fn dynamic_sbm_step_with<R: Rng + ?Sized>(
    labels: &[usize],
    n_communities: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n_communities < 2 {
        return Err(Error::InvalidConfig(
            "a community flip needs at least two communities".into(),
        ));
    }
    if labels.is_empty() {
        return Err(Error::InvalidSize("no nodes to move".into()));
    }
    if let Some(&c) = labels.iter().find(|&&c| c >= n_communities) {
        return Err(Error::InvalidConfig(format!(
            "label {c} outside {n_communities} communities"
        )));
    }
    let node = rng.random_range(0..labels.len());
    let others: Vec<usize> = (0..n_communities).filter(|&c| c != labels[node]).collect();
    let target = *others.choose(rng).expect("at least one other community");
    let mut next = labels.to_vec();
    next[node] = target;
    Ok(next)
}

/// Appends one node to `a`, drawing its connections to every existing node with
/// probability `probs[j]`.
pub fn grow_by_one<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    probs: &[f64],
    rng: &mut R,
) -> Result<AdjacencyMatrix> {
    let n = a.n();
    if probs.len() != n {
        return Err(shape_mismatch(n, probs.len()));
    }
    if let Some(v) = probs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("probability {v} outside [0, 1]")));
    }
    let mut next = a.entries.clone().resize(n + 1, n + 1, 0.0);
    for (j, &p) in probs.iter().enumerate() {
        if rng.random::<f64>() < p {
            next[(n, j)] = 1.0;
            if !a.directed {
                next[(j, n)] = 1.0;
            }
        }
        if a.directed && rng.random::<f64>() < p {
            next[(j, n)] = 1.0;
        }
    }
    Ok(AdjacencyMatrix {
        entries: next,
        directed: a.directed,
    })
}
