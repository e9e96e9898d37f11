use std::path::Path;

use anyhow::{bail, Context, Result};
use rdpg::io::{align_rows, read_edge_list, read_embedding_csv, read_mask, NodeIndex};
use rdpg::numerics::procrustes_distance;
use rdpg::{cost_directed, cost_undirected, DMatrix, ObservationMask};
use serde_json::{json, Value};

use crate::args::EvalArgs;

fn read(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    read_embedding_csv(path).with_context(|| format!("reading {}", path.display()))
}

/// Reads `path` and reorders its rows into `ids`; differing node sets are an error.
fn read_aligned(path: &Path, ids: &[String]) -> Result<DMatrix<f64>> {
    let (other, x) = read(path)?;
    align_rows(&other, &x, ids).with_context(|| format!("node ids of {} do not match", path.display()))
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = top.shape();
    DMatrix::from_fn(2 * n, d, |i, j| if i < n { top[(i, j)] } else { bottom[(i - n, j)] })
}

pub fn run(args: &EvalArgs) -> Result<Value> {
    let (ids, a_out) = read(&args.a)?;
    let b_out = read_aligned(&args.b, &ids)?;
    let pair = match (&args.a_in, &args.b_in) {
        (Some(ai), Some(bi)) => Some((read_aligned(ai, &ids)?, read_aligned(bi, &ids)?)),
        _ => None,
    };
    if a_out.ncols() != b_out.ncols() {
        bail!("embeddings have {} and {} columns", a_out.ncols(), b_out.ncols());
    }

    let (procrustes_sq, p_hat, p_ref) = match &pair {
        None => (
            procrustes_distance(&a_out, &b_out)?.0,
            &a_out * a_out.transpose(),
            &b_out * b_out.transpose(),
        ),
        Some((a_in, b_in)) => (
            procrustes_distance(&stack(&a_out, a_in), &stack(&b_out, b_in))?.0,
            &a_out * a_in.transpose(),
            &b_out * b_in.transpose(),
        ),
    };
    let error = (p_hat - p_ref).norm();
    let mut result = json!({
        "n": ids.len(),
        "d": a_out.ncols(),
        "procrustes_sq": procrustes_sq,
        "error": error,
        "error_normalized": error / (ids.len() as f64).sqrt(),
    });

    if let Some(edges) = &args.edges {
        let index = NodeIndex::from_ids(&ids)?;
        let (graph, index) = read_edge_list(edges, Some(pair.is_some()), Some(&index))
            .with_context(|| format!("reading {}", edges.display()))?;
        let mask = match &args.mask {
            Some(p) => read_mask(p, &index, graph.directed())?,
            None => ObservationMask::hollow(graph.n(), graph.directed())?,
        };
        let cost = match &pair {
            None => cost_undirected(&graph, &mask, &a_out)?,
            Some((a_in, _)) => cost_directed(&graph, &mask, &a_out, a_in)?,
        };
        result["cost"] = json!(cost);
    }
    Ok(result)
}
