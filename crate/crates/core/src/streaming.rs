//! Tracking embeddings over a sequence of graph snapshots.
//!
//! Each snapshot is optionally smoothed by a [`FilterState`], then the previous embedding is
//! refined by a few warm-started solver iterations. Nodes can join or leave between snapshots;
//! a joining node is placed by least squares against the current embedding.

use std::collections::{HashMap, VecDeque};

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::directed::{
    ase_directed_matrix, rescale_columns, rgd_iterations, ArmijoConfig, DirectedEmbedding, StepRule,
};
use crate::error::{shape_mismatch, Error, Result};
use crate::graph::{AdjacencyMatrix, ObservationMask, ProbabilityMatrix};
use crate::manifold::{constraint_violation, ManifoldPoint, MEMBERSHIP_TOL};
use crate::numerics::{frobenius_sq, solve_spd};
use crate::undirected::{
    bcd_cycles, default_ids, gd_iterations, EmbeddingMatrix, Init, SolverConfig, RIDGE,
};


/// Temporal smoothing applied to incoming adjacency snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterMode {
    Passthrough,
    /// Mean of the last `window` snapshots.
    MovingAverage { window: usize },
    /// `B_t = βB_{t−1} + (1−β)A_t` with `B_0 = A_0`.
    SinglePole { beta: f64 },
}

impl FilterMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterMode::Passthrough => Ok(()),
            FilterMode::MovingAverage { window } if window >= 1 => Ok(()),
            FilterMode::MovingAverage { .. } => Err(Error::InvalidConfig(
                "moving-average window must be at least 1".into(),
            )),
            FilterMode::SinglePole { beta } if (0.0..1.0).contains(&beta) => Ok(()),
            FilterMode::SinglePole { beta } => Err(Error::InvalidConfig(format!(
                "single-pole coefficient {beta} outside [0, 1)"
            ))),
        }
    }
}

/// Filter memory. Moving averages keep a window of snapshots; the single-pole filter keeps
/// only its last output.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    mode: FilterMode,
    history: VecDeque<DMatrix<f64>>,
}

impl FilterState {
    pub fn new(mode: FilterMode) -> Result<Self> {
        mode.validate()?;
        Ok(Self {
            mode,
            history: VecDeque::new(),
        })
    }

    pub fn mode(&self) -> FilterMode {
        self.mode
    }

    /// Feeds snapshot `a` and returns the filtered matrix.
    pub fn step(&mut self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if let Some(prev) = self.history.back() {
            if prev.shape() != a.shape() {
                return Err(shape_mismatch(
                    format!("{}x{} snapshot", prev.nrows(), prev.ncols()),
                    format!("{}x{}", a.nrows(), a.ncols()),
                ));
            }
        }
        match self.mode {
            FilterMode::Passthrough => Ok(a.clone()),
            FilterMode::MovingAverage { window } => {
                self.history.push_back(a.clone());
                while self.history.len() > window {
                    self.history.pop_front();
                }
                let mut sum = DMatrix::zeros(a.nrows(), a.ncols());
                for h in &self.history {
                    sum += h;
                }
                Ok(sum / self.history.len() as f64)
            }
            FilterMode::SinglePole { beta } => {
                let next = match self.history.pop_back() {
                    Some(prev) => prev * beta + a * (1.0 - beta),
                    None => a.clone(),
                };
                self.history.push_back(next.clone());
                Ok(next)
            }
        }
    }

    /// Re-indexes the filter memory to a new node set. `map[i]` is the old index of new node
    /// `i`, or `None` for a node that just joined; rows and columns touching a new node are
    /// copied from `incoming`.
    pub fn remap(&mut self, map: &[Option<usize>], incoming: &DMatrix<f64>) -> Result<()> {
        let n = map.len();
        if incoming.shape() != (n, n) {
            return Err(shape_mismatch(format!("{n}x{n} snapshot"), format!("{:?}", incoming.shape())));
        }
        for h in self.history.iter_mut() {
            let old = h.clone();
            *h = DMatrix::from_fn(n, n, |i, j| match (map[i], map[j]) {
                (Some(oi), Some(oj)) => old[(oi, oj)],
                _ => incoming[(i, j)],
            });
        }
        Ok(())
    }
}

/// Inner solver used to refine the embedding after each snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackMethod {
    Gd,
    Bcd,
    /// Riemannian GD; the only method for directed graphs.
    Rgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub d: usize,
    pub directed: bool,
    pub method: TrackMethod,
    /// GD or Riemannian GD iterations (or BCD cycles) per snapshot.
    pub inner_steps: usize,
    /// Fixed step; `None` recomputes the default per snapshot (GD) or line-searches (Riemannian GD).
    pub step_size: Option<f64>,
    pub filter: FilterMode,
    pub armijo: ArmijoConfig,
}

impl TrackerConfig {
    pub fn new(d: usize, directed: bool, method: TrackMethod) -> Self {
        let inner_steps = match method {
            TrackMethod::Bcd => 1,
            TrackMethod::Gd | TrackMethod::Rgd => 10,
        };
        Self {
            d,
            directed,
            method,
            inner_steps,
            step_size: None,
            filter: FilterMode::Passthrough,
            armijo: ArmijoConfig::default(),
        }
    }

    pub fn with_inner_steps(mut self, steps: usize) -> Self {
        self.inner_steps = steps;
        self
    }

    pub fn with_filter(mut self, filter: FilterMode) -> Self {
        self.filter = filter;
        self
    }

    pub fn with_step_size(mut self, alpha: f64) -> Self {
        self.step_size = Some(alpha);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        match (self.directed, self.method) {
            (true, TrackMethod::Rgd) | (false, TrackMethod::Gd | TrackMethod::Bcd) => {}
            (true, m) => {
                return Err(Error::InvalidConfig(format!(
                    "{m:?} does not support directed graphs; use Riemannian GD"
                )))
            }
            (false, TrackMethod::Rgd) => {
                return Err(Error::InvalidConfig(
                    "Riemannian GD tracks directed graphs only".into(),
                ))
            }
        }
        self.filter.validate()?;
        self.armijo.validate()
    }

    fn solver(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.d);
        cfg.step_size = self.step_size;
        cfg
    }
}

/// Per-snapshot tracking summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackStep {
    pub t: usize,
    /// Masked cost against the filtered snapshot after the inner iterations.
    pub cost: f64,
    pub n_nodes: usize,
    pub warnings: usize,
}

/// Running embedding of a changing graph.
#[derive(Debug, Clone)]
pub struct TrackerState {
    cfg: TrackerConfig,
    ids: Vec<String>,
    /// Undirected positions, or the outgoing factor.
    x: DMatrix<f64>,
    /// Incoming factor for directed graphs.
    right: Option<DMatrix<f64>>,
    filter: FilterState,
    t: usize,
}

impl TrackerState {
    /// Starts from an existing embedding. Directed trackers need `right`.
    pub fn new(
        cfg: TrackerConfig,
        ids: Vec<String>,
        x: DMatrix<f64>,
        right: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        cfg.validate()?;
        if x.shape() != (ids.len(), cfg.d) {
            return Err(shape_mismatch(
                format!("{}x{} embedding", ids.len(), cfg.d),
                format!("{:?}", x.shape()),
            ));
        }
        if cfg.directed != right.is_some() {
            return Err(Error::InvalidConfig(
                "directed trackers need both factors and undirected trackers exactly one".into(),
            ));
        }
        if let Some(r) = &right {
            if r.shape() != x.shape() {
                return Err(shape_mismatch(format!("{:?}", x.shape()), format!("{:?}", r.shape())));
            }
        }
        let filter = FilterState::new(cfg.filter)?;
        let mut state = Self {
            cfg,
            ids,
            x,
            right,
            filter,
            t: 0,
        };
        state.restore_manifold()?;
        Ok(state)
    }

    /// Starts from the spectral embedding of the masked first snapshot. The snapshot itself is
    /// not consumed; pass it to [`TrackerState::track_step`] to run the first refinement.
    pub fn from_snapshot(
        cfg: TrackerConfig,
        a: &AdjacencyMatrix,
        m: &ObservationMask,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        cfg.validate()?;
        let masked = a.entries().component_mul(m.entries());
        let ids = ids.unwrap_or_else(|| default_ids(a.n()));
        if cfg.directed {
            let (l, r) = ase_directed_matrix(&masked, cfg.d)?;
            Self::new(cfg, ids, l, Some(r))
        } else {
            let x = crate::undirected::ase_matrix(&masked, cfg.d)?;
            Self::new(cfg, ids, x, None)
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Number of snapshots processed so far.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn right(&self) -> Option<&DMatrix<f64>> {
        self.right.as_ref()
    }

    pub fn embedding(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(self.x.clone(), self.ids.clone())
    }

    pub fn directed_embedding(&self) -> Result<DirectedEmbedding> {
        let right = self
            .right
            .clone()
            .ok_or_else(|| Error::InvalidConfig("tracker is undirected".into()))?;
        DirectedEmbedding::new(self.x.clone(), right, self.ids.clone())
    }

    /// `X̂X̂ᵀ` or `X̂ˡ(X̂ʳ)ᵀ`.
    pub fn probability_estimate(&self) -> DMatrix<f64> {
        match &self.right {
            Some(r) => &self.x * r.transpose(),
            None => &self.x * self.x.transpose(),
        }
    }

    /// Filters snapshot `a` and refines the embedding with warm-started inner iterations.
    pub fn track_step(&mut self, a: &AdjacencyMatrix, m: &ObservationMask) -> Result<TrackStep> {
        let n = self.n();
        if a.n() != n || m.n() != n {
            return Err(shape_mismatch(
                format!("{n}-node snapshot and mask"),
                format!("{} and {}", a.n(), m.n()),
            ));
        }
        if a.directed() != self.cfg.directed {
            return Err(Error::InvalidConfig("snapshot directedness differs from the tracker".into()));
        }
        let b = self.filter.step(a.entries())?;
        let solver = self.cfg.solver();
        let steps = self.cfg.inner_steps;
        let mut warnings = 0;
        let cost = match (self.cfg.method, self.right.take()) {
            (TrackMethod::Gd, None) => {
                let (x, report) = gd_iterations(&b, m.entries(), self.x.clone(), &solver, steps)?;
                self.x = x;
                report.final_cost
            }
            (TrackMethod::Bcd, None) => {
                let (x, report) = bcd_cycles(&b, m, self.x.clone(), &solver, steps)?;
                warnings = report.warnings;
                self.x = x;
                report.final_cost
            }
            (TrackMethod::Rgd, Some(right)) => {
                let rule = match self.cfg.step_size {
                    Some(alpha) => StepRule::Fixed(alpha),
                    None => StepRule::Armijo(self.cfg.armijo),
                };
                let left = ManifoldPoint::new(self.x.clone())?;
                let right = ManifoldPoint::new(right)?;
                let (l, r, report) =
                    rgd_iterations(&b, m.entries(), left, right, rule, &solver, steps)?;
                warnings = report.warnings;
                let rescaled = rescale_columns(l.matrix(), r.matrix())?;
                let (l, r, _) = rescaled.into_parts();
                self.x = l;
                self.right = Some(r);
                report.final_cost
            }
            _ => unreachable!("method and directedness are validated at construction"),
        };
        self.t += 1;
        debug!("track t={} cost={cost:e}", self.t);
        Ok(TrackStep {
            t: self.t,
            cost,
            n_nodes: n,
            warnings,
        })
    }

    /// Adds node `id`. `out_row[j]` is its edge weight to existing node `j`; directed trackers
    /// also need `in_row[j]`, the weight from `j` to the new node.
    ///
    /// Returns the number of ridge fallbacks used by the least-squares placement.
    pub fn add_node(&mut self, id: &str, out_row: &[f64], in_row: Option<&[f64]>) -> Result<usize> {
        let n = self.n();
        if self.ids.iter().any(|existing| existing == id) {
            return Err(Error::InvalidConfig(format!("node `{id}` is already tracked")));
        }
        if out_row.len() != n {
            return Err(shape_mismatch(n, out_row.len()));
        }
        let a_out = DVector::from_column_slice(out_row);
        let mut fallbacks = 0;
        match self.right.take() {
            None => {
                let (theta, ridge) = least_squares_row(&self.x, &a_out)?;
                fallbacks += ridge as usize;
                self.x = append_row(&self.x, &theta);
            }
            Some(right) => {
                let in_row = in_row.ok_or_else(|| {
                    Error::InvalidConfig("directed trackers need the incoming row".into())
                })?;
                if in_row.len() != n {
                    return Err(shape_mismatch(n, in_row.len()));
                }
                let a_in = DVector::from_column_slice(in_row);
                let (theta_l, ridge_l) = least_squares_row(&right, &a_out)?;
                let (theta_r, ridge_r) = least_squares_row(&self.x, &a_in)?;
                fallbacks += ridge_l as usize + ridge_r as usize;
                self.x = append_row(&self.x, &theta_l);
                self.right = Some(append_row(&right, &theta_r));
            }
        }
        self.ids.push(id.to_string());
        self.restore_manifold()?;
        let mut map: Vec<Option<usize>> = (0..n).map(Some).collect();
        map.push(None);
        let incoming = self.zero_snapshot_with(out_row, in_row);
        self.filter.remap(&map, &incoming)?;
        Ok(fallbacks)
    }

    fn zero_snapshot_with(&self, out_row: &[f64], in_row: Option<&[f64]>) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (j, &v) in out_row.iter().enumerate() {
            m[(n - 1, j)] = v;
            m[(j, n - 1)] = in_row.map_or(v, |r| r[j]);
        }
        m
    }

    /// Drops node `id` and its row of the embedding.
    pub fn remove_node(&mut self, id: &str) -> Result<()> {
        let idx = self
            .ids
            .iter()
            .position(|existing| existing == id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))?;
        if self.n() == 1 {
            return Err(Error::InvalidSize("cannot remove the last tracked node".into()));
        }
        self.ids.remove(idx);
        self.x = self.x.clone().remove_row(idx);
        if let Some(r) = self.right.take() {
            self.right = Some(r.remove_row(idx));
        }
        self.restore_manifold()?;
        let map: Vec<Option<usize>> = (0..self.n() + 1).filter(|&i| i != idx).map(Some).collect();
        let placeholder = DMatrix::zeros(map.len(), map.len());
        self.filter.remap(&map, &placeholder)?;
        Ok(())
    }

    /// Aligns the tracked node set with `ids`, the node order of snapshot `a`: absent nodes are
    /// removed, new nodes are placed by least squares from their rows in `a`, and the
    /// embedding rows are reordered to match. Returns the ridge fallback count.
    pub fn sync_nodes(&mut self, ids: &[String], a: &AdjacencyMatrix) -> Result<usize> {
        if ids.len() != a.n() {
            return Err(shape_mismatch(a.n(), ids.len()));
        }
        let mut seen = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if seen.insert(id.as_str(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate node id `{id}`")));
            }
        }
        if self.ids.as_slice() == ids {
            return Ok(0);
        }
        let old_pos: HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let kept_new: Vec<usize> = (0..ids.len())
            .filter(|&i| old_pos.contains_key(ids[i].as_str()))
            .collect();
        if kept_new.is_empty() {
            return Err(Error::InvalidConfig(
                "snapshot shares no nodes with the tracked graph".into(),
            ));
        }
        let kept_old: Vec<usize> = kept_new.iter().map(|&i| old_pos[ids[i].as_str()]).collect();

        // Restrict to the surviving nodes, in the snapshot's order.
        self.x = self.x.select_rows(kept_old.iter());
        self.right = self.right.as_ref().map(|r| r.select_rows(kept_old.iter()));
        let mut map: Vec<Option<usize>> = vec![None; ids.len()];
        for (&new_i, &old_i) in kept_new.iter().zip(&kept_old) {
            map[new_i] = Some(old_i);
        }

        // Place joining nodes against the survivors, then append in snapshot order.
        let mut fallbacks = 0;
        let joining: Vec<usize> = (0..ids.len()).filter(|i| map[*i].is_none()).collect();
        let mut rows_l = Vec::with_capacity(joining.len());
        let mut rows_r = Vec::with_capacity(joining.len());
        for &i in &joining {
            let out: DVector<f64> = DVector::from_iterator(
                kept_new.len(),
                kept_new.iter().map(|&j| a.entries()[(i, j)]),
            );
            let inn: DVector<f64> = DVector::from_iterator(
                kept_new.len(),
                kept_new.iter().map(|&j| a.entries()[(j, i)]),
            );
            match &self.right {
                None => {
                    let (theta, ridge) = least_squares_row(&self.x, &out)?;
                    fallbacks += ridge as usize;
                    rows_l.push(theta);
                }
                Some(r) => {
                    let (tl, rl) = least_squares_row(r, &out)?;
                    let (tr, rr) = least_squares_row(&self.x, &inn)?;
                    fallbacks += rl as usize + rr as usize;
                    rows_l.push(tl);
                    rows_r.push(tr);
                }
            }
        }

        let d = self.cfg.d;
        let mut x = DMatrix::zeros(ids.len(), d);
        let mut right = self.right.as_ref().map(|_| DMatrix::zeros(ids.len(), d));
        for (k, &new_i) in kept_new.iter().enumerate() {
            x.set_row(new_i, &self.x.row(k));
            if let (Some(r), Some(old)) = (right.as_mut(), self.right.as_ref()) {
                r.set_row(new_i, &old.row(k));
            }
        }
        for (k, &new_i) in joining.iter().enumerate() {
            x.set_row(new_i, &rows_l[k].transpose());
            if let Some(r) = right.as_mut() {
                r.set_row(new_i, &rows_r[k].transpose());
            }
        }
        self.x = x;
        self.right = right;
        self.ids = ids.to_vec();
        self.restore_manifold()?;
        self.filter.remap(&map, a.entries())?;
        Ok(fallbacks)
    }

    /// Node changes can push a directed pair off the orthogonal-column manifold. Replacing
    /// it with the spectral factorization of its own product keeps `Xˡ(Xʳ)ᵀ` unchanged.
    fn restore_manifold(&mut self) -> Result<()> {
        let Some(r) = &self.right else {
            return Ok(());
        };
        if constraint_violation(&self.x) <= MEMBERSHIP_TOL && constraint_violation(r) <= MEMBERSHIP_TOL {
            return Ok(());
        }
        let product = &self.x * r.transpose();
        let (l, r) = ase_directed_matrix(&product, self.cfg.d)?;
        self.x = l;
        self.right = Some(r);
        Ok(())
    }
}

fn append_row(x: &DMatrix<f64>, row: &DVector<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = x.clone().insert_row(n, 0.0);
    out.set_row(n, &row.transpose());
    out
}

/// `argmin_θ ‖a − Xθ‖`, with a small ridge when `XᵀX` is singular. The flag reports the ridge.
pub fn least_squares_row(x: &DMatrix<f64>, a: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if a.len() != x.nrows() {
        return Err(shape_mismatch(x.nrows(), a.len()));
    }
    let gram = x.tr_mul(x);
    let rhs = x.tr_mul(a);
    match solve_spd(&gram, &rhs) {
        Ok(theta) => Ok((theta, false)),
        Err(_) => {
            let d = gram.nrows();
            let lambda = (RIDGE * gram.trace() / d as f64).max(1e-12);
            let shifted = &gram + DMatrix::identity(d, d) * lambda;
            Ok((solve_spd(&shifted, &rhs)?, true))
        }
    }
}

/// `‖P̂ − P‖_F`, divided by `√N` when `normalized`.
pub fn tracking_error(estimate: &DMatrix<f64>, p: &ProbabilityMatrix, normalized: bool) -> Result<f64> {
    if estimate.shape() != p.entries().shape() {
        return Err(shape_mismatch(
            format!("{:?}", p.entries().shape()),
            format!("{:?}", estimate.shape()),
        ));
    }
    let err = frobenius_sq(&(estimate - p.entries())).sqrt();
    Ok(if normalized {
        err / (p.n() as f64).sqrt()
    } else {
        err
    })
}

/// Repeated least-squares placement: every existing row stays frozen and each joining node is
/// placed by least squares. Used as the baseline for online tracking of growing graphs.
pub fn least_squares_extend(x: &DMatrix<f64>, a: &AdjacencyMatrix) -> Result<(DMatrix<f64>, usize)> {
    let n0 = x.nrows();
    let n = a.n();
    if n < n0 {
        return Err(shape_mismatch(format!("at least {n0} nodes"), n));
    }
    let mut out = x.clone();
    let mut fallbacks = 0;
    for i in n0..n {
        let row = DVector::from_iterator(i, (0..i).map(|j| a.entries()[(i, j)]));
        let (theta, ridge) = least_squares_row(&out, &row)?;
        fallbacks += ridge as usize;
        out = append_row(&out, &theta);
    }
    Ok((out, fallbacks))
}

/// Warm-started solve on a single snapshot, for callers that manage their own state.
pub fn refine(
    a: &AdjacencyMatrix,
    m: &ObservationMask,
    x: DMatrix<f64>,
    method: TrackMethod,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let cfg = SolverConfig::new(x.ncols()).with_init(Init::Warm(x.clone()));
    match method {
        TrackMethod::Gd => Ok(gd_iterations(a.entries(), m.entries(), x, &cfg, steps)?.0),
        TrackMethod::Bcd => Ok(bcd_cycles(a.entries(), m, x, &cfg, steps)?.0),
        TrackMethod::Rgd => Err(Error::InvalidConfig(
            "use a directed tracker for Riemannian GD".into(),
        )),
    }
}
