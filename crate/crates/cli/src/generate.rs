use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rdpg::graph::{
    block_probability, dynamic_sbm_step_with, erdos_renyi_probability, grow_by_one,
    labels_from_sizes, rng_from_seed, sample_rdpg_with, sbm_latent_positions, senate_graph,
};
use rdpg::io::{write_edge_list, write_embedding_csv, write_json, write_node_list, SnapshotEntry, SnapshotManifest};
use rdpg::numerics::top_svd;
use rdpg::{AdjacencyMatrix, DMatrix, SenateConfig};
use serde_json::{json, Value};

use crate::args::{Model, SbmArgs};

/// Ground-truth latent positions; `right` only for directed models.
struct Truth {
    left: DMatrix<f64>,
    right: Option<DMatrix<f64>>,
}

pub fn run(model: &Model, seed: u64, out: &Path) -> Result<Value> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match model {
        Model::Er { n, p, directed } => {
            let prob = erdos_renyi_probability(*n, *p)?;
            let a = sample_rdpg_with(&prob, *directed, &mut rng_from_seed(seed))?;
            let col = DMatrix::from_element(*n, 1, p.sqrt());
            let truth = Truth {
                left: col.clone(),
                right: directed.then_some(col),
            };
            write_snapshot(out, &a, Some(&truth), None)?;
            Ok(summary(&a))
        }
        Model::Sbm(sbm) => {
            let (sizes, pi) = sbm_parameters(sbm)?;
            let labels = labels_from_sizes(&sizes);
            let prob = block_probability(&labels, &pi)?;
            let a = sample_rdpg_with(&prob, sbm.directed, &mut rng_from_seed(seed))?;
            let truth = block_truth(&labels, &pi, sbm.directed);
            write_snapshot(out, &a, truth.as_ref(), Some(&labels))?;
            Ok(summary(&a))
        }
        Model::DynamicSbm { sbm, steps } => {
            let (sizes, pi) = sbm_parameters(sbm)?;
            let mut rng = rng_from_seed(seed);
            let mut labels = labels_from_sizes(&sizes);
            let mut entries = Vec::with_capacity(steps + 1);
            let mut last = None;
            for t in 0..=*steps {
                if t > 0 {
                    labels = dynamic_sbm_step_with(&labels, pi.nrows(), &mut rng)?;
                }
                let prob = block_probability(&labels, &pi)?;
                let a = sample_rdpg_with(&prob, sbm.directed, &mut rng)?;
                let truth = block_truth(&labels, &pi, sbm.directed);
                entries.push(write_step(out, t, &a, truth.as_ref(), Some(&labels))?);
                last = Some(a);
            }
            write_manifest(out, sbm.directed, entries)?;
            let mut s = summary(&last.expect("at least one step"));
            s["steps"] = json!(steps + 1);
            Ok(s)
        }
        Model::Senate { senators, laws } => {
            let (Ok(party_senators), Ok(laws)) =
                (<[usize; 2]>::try_from(senators.as_slice()), <[usize; 3]>::try_from(laws.as_slice()))
            else {
                bail!("--senators takes two counts and --laws three");
            };
            let cfg = SenateConfig {
                party_senators,
                laws,
                seed,
                ..SenateConfig::default()
            };
            let a = senate_graph(&cfg)?;
            let labels = cfg.labels();
            let truth = block_truth(&labels, &cfg.pi, true);
            write_snapshot(out, &a, truth.as_ref(), Some(&labels))?;
            Ok(summary(&a))
        }
        Model::GrowingEr { n0, p, steps } => {
            let mut rng = rng_from_seed(seed);
            let prob = erdos_renyi_probability(*n0, *p)?;
            let mut a = sample_rdpg_with(&prob, false, &mut rng)?;
            let mut entries = Vec::with_capacity(steps + 1);
            for t in 0..=*steps {
                if t > 0 {
                    a = grow_by_one(&a, &vec![*p; a.n()], &mut rng)?;
                }
                let truth = Truth {
                    left: DMatrix::from_element(a.n(), 1, p.sqrt()),
                    right: None,
                };
                entries.push(write_step(out, t, &a, Some(&truth), None)?);
            }
            write_manifest(out, false, entries)?;
            let mut s = summary(&a);
            s["steps"] = json!(steps + 1);
            Ok(s)
        }
    }
}

fn summary(a: &AdjacencyMatrix) -> Value {
    json!({
        "n": a.n(),
        "directed": a.directed(),
        "edges": a.edge_count(),
        "density": a.density(),
    })
}

fn sbm_parameters(args: &SbmArgs) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let k = args.blocks.unwrap_or(args.sizes.len());
    if k != args.sizes.len() {
        bail!("--blocks {k} does not match {} block sizes", args.sizes.len());
    }
    let pi = match (&args.pi, args.p, args.q) {
        (Some(text), _, _) => parse_block_matrix(text)?,
        (None, Some(p), Some(q)) => DMatrix::from_fn(k, k, |i, j| if i == j { p } else { q }),
        _ => bail!("give either --pi or both --p and --q"),
    };
    if pi.shape() != (k, k) {
        bail!("block matrix is {}x{} but there are {k} blocks", pi.nrows(), pi.ncols());
    }
    if !args.directed && pi != pi.transpose() {
        bail!("an undirected SBM needs a symmetric block matrix; pass --directed otherwise");
    }
    Ok((args.sizes.clone(), pi))
}

/// Parses `a,b;c,d` into a square matrix.
pub fn parse_block_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad entry `{v}` in --pi")))
                .collect()
        })
        .collect::<Result<_>>()?;
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        bail!("--pi must be square, with rows separated by `;`");
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

/// Latent positions reproducing a block model, or `None` when an undirected `Π` is indefinite.
fn block_truth(labels: &[usize], pi: &DMatrix<f64>, directed: bool) -> Option<Truth> {
    if !directed {
        return match sbm_latent_positions(labels, pi) {
            Ok(left) => Some(Truth { left, right: None }),
            Err(e) => {
                warn!("no ground-truth positions: {e}");
                None
            }
        };
    }
    let k = pi.nrows();
    let svd = top_svd(pi, k).ok()?;
    let floor = 1e-12 * pi.amax().max(f64::MIN_POSITIVE);
    let rank = svd.values.iter().filter(|&&s| s > floor).count().max(1);
    let block = |f: &DMatrix<f64>| {
        DMatrix::from_fn(labels.len(), rank, |i, j| f[(labels[i], j)] * svd.values[j].sqrt())
    };
    Some(Truth {
        left: block(&svd.left),
        right: Some(block(&svd.right)),
    })
}

fn node_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn write_snapshot(
    dir: &Path,
    a: &AdjacencyMatrix,
    truth: Option<&Truth>,
    labels: Option<&[usize]>,
) -> Result<()> {
    let ids = node_ids(a.n());
    write_edge_list(&dir.join("edges.tsv"), a, &ids)?;
    write_node_list(&dir.join("nodes.txt"), &ids)?;
    if let Some(truth) = truth {
        write_embedding_csv(&dir.join("truth.csv"), &ids, &truth.left)?;
        if let Some(right) = &truth.right {
            write_embedding_csv(&dir.join("truth_in.csv"), &ids, right)?;
        }
    }
    if let Some(labels) = labels {
        let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
        w.write_record(["node_id", "label"])?;
        for (id, label) in ids.iter().zip(labels) {
            w.write_record([id.as_str(), &label.to_string()])?;
        }
        w.flush()?;
    }
    info!("wrote {} nodes, {} edges to {}", a.n(), a.edge_count(), dir.display());
    Ok(())
}

fn write_step(
    out: &Path,
    t: usize,
    a: &AdjacencyMatrix,
    truth: Option<&Truth>,
    labels: Option<&[usize]>,
) -> Result<SnapshotEntry> {
    let name = format!("step_{t:04}");
    let dir = out.join(&name);
    fs::create_dir_all(&dir)?;
    write_snapshot(&dir, a, truth, labels)?;
    let rel = Path::new(&name);
    Ok(SnapshotEntry {
        t,
        edges: rel.join("edges.tsv"),
        mask: None,
        nodes: Some(rel.join("nodes.txt")),
        truth: truth.map(|_| rel.join("truth.csv")),
        truth_in: truth.and_then(|tr| tr.right.as_ref()).map(|_| rel.join("truth_in.csv")),
    })
}

fn write_manifest(out: &Path, directed: bool, steps: Vec<SnapshotEntry>) -> Result<()> {
    let manifest = SnapshotManifest {
        directed,
        steps,
        base_dir: out.to_path_buf(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(())
}
