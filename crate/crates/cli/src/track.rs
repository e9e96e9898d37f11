use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rdpg::io::{write_embedding_csv, write_tracking_csv, SnapshotManifest, TrackingRow};
use rdpg::streaming::least_squares_extend;
use rdpg::{
    tracking_error, DMatrix, FilterMode, ProbabilityMatrix, TrackMethod, TrackerConfig, TrackerState,
};
use serde_json::{json, Value};

use crate::args::{FilterKind, TrackArgs, TrackMethodArg};

fn tracker_config(args: &TrackArgs, directed: bool) -> TrackerConfig {
    let method = match args.method {
        TrackMethodArg::Gd => TrackMethod::Gd,
        TrackMethodArg::Bcd => TrackMethod::Bcd,
        TrackMethodArg::Rgd => TrackMethod::Rgd,
    };
    let filter = match args.filter {
        FilterKind::Passthrough => FilterMode::Passthrough,
        FilterKind::MovingAverage => FilterMode::MovingAverage { window: args.window },
        FilterKind::SinglePole => FilterMode::SinglePole { beta: args.beta },
    };
    let mut cfg = TrackerConfig::new(args.d, directed, method).with_filter(filter);
    if let Some(steps) = args.inner_steps {
        cfg = cfg.with_inner_steps(steps);
    }
    cfg.step_size = args.step_size;
    cfg
}

/// Frozen least-squares embedding of a growing graph whose existing node order never changes.
struct Baseline {
    ids: Vec<String>,
    x: DMatrix<f64>,
}

pub fn run(args: &TrackArgs, out: &Path) -> Result<Value> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = SnapshotManifest::load(&args.manifest)
        .with_context(|| format!("loading {}", args.manifest.display()))?;
    manifest.validate()?;
    if manifest.steps.is_empty() {
        bail!("manifest lists no steps");
    }
    if args.baseline && manifest.directed {
        bail!("--baseline applies to undirected streams only");
    }
    let cfg = tracker_config(args, manifest.directed);
    let steps_dir = out.join("steps");
    if !args.no_step_embeddings {
        fs::create_dir_all(&steps_dir)?;
    }

    let mut tracker: Option<TrackerState> = None;
    let mut baseline: Option<Baseline> = None;
    let mut rows = Vec::with_capacity(manifest.steps.len());
    for k in 0..manifest.steps.len() {
        let snap = manifest.load_step(k)?;
        let t = snap.t;
        let state = match tracker.as_mut() {
            Some(state) => {
                let fallbacks = state
                    .sync_nodes(&snap.ids, &snap.adjacency)
                    .with_context(|| format!("step t={t}"))?;
                if fallbacks > 0 {
                    warn!("step t={t}: {fallbacks} new nodes placed with a ridge");
                }
                state
            }
            None => tracker.insert(
                TrackerState::from_snapshot(cfg.clone(), &snap.adjacency, &snap.mask, Some(snap.ids.clone()))
                    .with_context(|| format!("step t={t}"))?,
            ),
        };
        let step = state
            .track_step(&snap.adjacency, &snap.mask)
            .with_context(|| format!("step t={t}"))?;
        if step.warnings > 0 {
            warn!("step t={t}: {} solver warnings", step.warnings);
        }

        let mut row = TrackingRow {
            t,
            cost: step.cost,
            error: None,
            error_normalized: None,
            n_nodes: step.n_nodes,
            baseline_error: None,
            baseline_error_normalized: None,
        };
        let truth = snap.truth.map(ProbabilityMatrix::new).transpose()?;
        if let Some(p) = &truth {
            let estimate = state.probability_estimate();
            row.error = Some(tracking_error(&estimate, p, false)?);
            row.error_normalized = Some(tracking_error(&estimate, p, true)?);
        }
        if args.baseline {
            let b = match baseline.take() {
                None => Baseline {
                    ids: snap.ids.clone(),
                    x: state.positions().clone(),
                },
                Some(b) => {
                    if snap.ids.len() < b.ids.len() || snap.ids[..b.ids.len()] != b.ids[..] {
                        bail!("step t={t}: --baseline needs a growing node set that keeps existing nodes in order");
                    }
                    let (x, _) = least_squares_extend(&b.x, &snap.adjacency)?;
                    Baseline { ids: snap.ids.clone(), x }
                }
            };
            if let Some(p) = &truth {
                let estimate = &b.x * b.x.transpose();
                row.baseline_error = Some(tracking_error(&estimate, p, false)?);
                row.baseline_error_normalized = Some(tracking_error(&estimate, p, true)?);
            }
            baseline = Some(b);
        }
        info!("t={t}: cost {:e}, {} nodes", row.cost, row.n_nodes);
        rows.push(row);

        if !args.no_step_embeddings {
            write_state(state, &steps_dir, &format!("embedding_t{t:04}"))?;
        }
    }

    let state = tracker.expect("at least one step");
    write_state(&state, out, "embedding")?;
    write_tracking_csv(&out.join("tracking.csv"), &rows)?;
    let last = rows.last().expect("at least one step");
    Ok(json!({
        "steps": rows.len(),
        "final_t": last.t,
        "final_cost": last.cost,
        "final_error_normalized": last.error_normalized,
        "final_baseline_error_normalized": last.baseline_error_normalized,
        "n_nodes": last.n_nodes,
    }))
}

fn write_state(state: &TrackerState, dir: &Path, stem: &str) -> Result<()> {
    match state.right() {
        None => write_embedding_csv(&dir.join(format!("{stem}.csv")), state.ids(), state.positions())?,
        Some(right) => {
            write_embedding_csv(&dir.join(format!("{stem}_out.csv")), state.ids(), state.positions())?;
            write_embedding_csv(&dir.join(format!("{stem}_in.csv")), state.ids(), right)?;
        }
    }
    Ok(())
}
