//! Plain-text file formats: tab-separated edge lists and masks, embedding CSVs, solver
//! reports, and snapshot manifests.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, ObservationMask};
use crate::undirected::SolveReport;

/// Dense index for every node id, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeIndex {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl NodeIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: &[String]) -> Result<Self> {
        let mut out = Self::new();
        for id in ids {
            if out.index.contains_key(id) {
                return Err(Error::InvalidConfig(format!("duplicate node id `{id}`")));
            }
            out.intern(id);
        }
        Ok(out)
    }

    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One parsed `src<TAB>dst[<TAB>weight]` line.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub src: String,
    pub dst: String,
    pub weight: f64,
    pub line: usize,
}

/// Parses an edge list. Blank lines and lines starting with `#` are skipped.
pub fn parse_edge_records(path: &Path) -> Result<Vec<EdgeRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(format!(
                "expected `src<TAB>dst[<TAB>weight]`, found {} fields",
                fields.len()
            )));
        }
        let weight = match fields.get(2) {
            Some(w) => w
                .parse::<f64>()
                .map_err(|e| parse_err(format!("bad weight `{w}`: {e}")))?,
            None => 1.0,
        };
        if !weight.is_finite() || weight < 0.0 {
            return Err(parse_err(format!("weight {weight} must be finite and nonnegative")));
        }
        if fields[0] == fields[1] {
            return Err(parse_err(format!("self-loop on `{}`", fields[0])));
        }
        out.push(EdgeRecord {
            src: fields[0].to_string(),
            dst: fields[1].to_string(),
            weight,
            line: lineno,
        });
    }
    Ok(out)
}

/// A `# directed` or `# undirected` comment line, if the file has one.
fn declared_direction(path: &Path) -> Result<Option<bool>> {
    let reader = BufReader::new(File::open(path)?);
    for line in reader.lines() {
        match line?.trim() {
            "# directed" => return Ok(Some(true)),
            "# undirected" => return Ok(Some(false)),
            _ => {}
        }
    }
    Ok(None)
}

/// Reads an edge list into an adjacency matrix. With `directed: None` a `# directed` or
/// `# undirected` comment line decides; without one the graph is inferred to be directed
/// only when some pairs are listed in both directions and others in one, or when a pair's
/// two directions carry different weights, so a list naming each pair once is
/// undirected. When `nodes` is given the
/// node set and order are fixed and unknown ids are errors; otherwise ids are indexed in
/// first-appearance order.
pub fn read_edge_list(
    path: &Path,
    directed: Option<bool>,
    nodes: Option<&NodeIndex>,
) -> Result<(AdjacencyMatrix, NodeIndex)> {
    let records = parse_edge_records(path)?;
    let directed = match directed {
        Some(d) => Some(d),
        None => declared_direction(path)?,
    };
    let mut index = nodes.cloned().unwrap_or_default();
    let fixed = nodes.is_some();
    let mut triples = Vec::with_capacity(records.len());
    for r in &records {
        let lookup = |index: &mut NodeIndex, id: &str| -> Result<usize> {
            if fixed {
                index.get(id).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: r.line,
                    msg: format!("unknown node id `{id}`"),
                })
            } else {
                Ok(index.intern(id))
            }
        };
        let i = lookup(&mut index, &r.src)?;
        let j = lookup(&mut index, &r.dst)?;
        triples.push((i, j, r.weight));
    }
    let n = index.len();
    if n == 0 {
        return Err(Error::InvalidSize(format!("{} lists no nodes", path.display())));
    }
    let mut entries = DMatrix::zeros(n, n);
    for &(i, j, w) in &triples {
        entries[(i, j)] = w;
    }
    let directed = directed.unwrap_or_else(|| {
        let mut two_way = false;
        let mut one_way = false;
        for &(i, j, w) in &triples {
            match entries[(j, i)] {
                0.0 => one_way = true,
                v if v == w => two_way = true,
                _ => return true,
            }
        }
        two_way && one_way
    });
    if !directed {
        for &(i, j, w) in &triples {
            if entries[(j, i)] != 0.0 && entries[(j, i)] != w {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    msg: format!(
                        "conflicting weights for undirected pair ({}, {})",
                        index.ids()[i],
                        index.ids()[j]
                    ),
                });
            }
            entries[(j, i)] = w;
        }
    }
    Ok((AdjacencyMatrix::new(entries, directed)?, index))
}

/// Writes `a` as an edge list headed by a `# directed` or `# undirected` line; undirected
/// graphs list each pair once.
pub fn write_edge_list(path: &Path, a: &AdjacencyMatrix, ids: &[String]) -> Result<()> {
    if ids.len() != a.n() {
        return Err(crate::error::shape_mismatch(a.n(), ids.len()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {}", if a.directed() { "directed" } else { "undirected" })?;
    let e = a.entries();
    for i in 0..a.n() {
        let start = if a.directed() { 0 } else { i + 1 };
        for j in start..a.n() {
            let v = e[(i, j)];
            if v == 0.0 {
                continue;
            }
            if v == 1.0 {
                writeln!(w, "{}\t{}", ids[i], ids[j])?;
            } else {
                writeln!(w, "{}\t{}\t{}", ids[i], ids[j], v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a list of UNOBSERVED pairs against a fixed node index. Weights, if present, are ignored.
pub fn read_mask(path: &Path, nodes: &NodeIndex, directed: bool) -> Result<ObservationMask> {
    let records = parse_edge_records(path)?;
    let mut pairs = Vec::with_capacity(records.len());
    for r in &records {
        let find = |id: &str| {
            nodes.get(id).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: r.line,
                msg: format!("unknown node id `{id}`"),
            })
        };
        pairs.push((find(&r.src)?, find(&r.dst)?));
    }
    ObservationMask::with_unobserved(nodes.len(), directed, &pairs)
}

/// One id per line; blank lines and `#` comments skipped.
pub fn read_node_list(path: &Path) -> Result<NodeIndex> {
    let text = fs::read_to_string(path)?;
    let ids: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    NodeIndex::from_ids(&ids)
}

pub fn write_node_list(path: &Path, ids: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for id in ids {
        writeln!(w, "{id}")?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with header `node_id,dim_0,...,dim_{d-1}`.
pub fn write_embedding_csv(path: &Path, ids: &[String], x: &DMatrix<f64>) -> Result<()> {
    if ids.len() != x.nrows() {
        return Err(crate::error::shape_mismatch(x.nrows(), ids.len()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node_id".to_string()];
    header.extend((0..x.ncols()).map(|k| format!("dim_{k}")));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(x.row(i).iter().map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embedding_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("node_id") || headers.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "expected header `node_id,dim_0,...`".into(),
        });
    }
    let d = headers.len() - 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != d + 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected {} fields, found {}", d + 1, rec.len()),
            });
        }
        ids.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("bad value `{field}`: {e}"),
            })?;
            values.push(v);
        }
    }
    let x = DMatrix::from_row_slice(ids.len(), d, &values);
    Ok((ids, x))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_report_json(path: &Path, report: &SolveReport) -> Result<()> {
    write_json(path, report)
}

/// CSV `iter,cost`, iteration 0 being the initial cost.
pub fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "cost"])?;
    for (k, c) in trace.iter().enumerate() {
        w.write_record([k.to_string(), format!("{c:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the per-step tracking CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRow {
    pub t: usize,
    pub cost: f64,
    pub error: Option<f64>,
    pub error_normalized: Option<f64>,
    pub n_nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline_error_normalized: Option<f64>,
}

/// CSV `t,cost,error,error_normalized,n_nodes`; the two baseline columns are appended when
/// any row carries them. Missing errors are written as empty fields.
pub fn write_tracking_csv(path: &Path, rows: &[TrackingRow]) -> Result<()> {
    let with_baseline = rows.iter().any(|r| r.baseline_error.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t", "cost", "error", "error_normalized", "n_nodes"];
    if with_baseline {
        header.extend(["baseline_error", "baseline_error_normalized"]);
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.t.to_string(),
            format!("{:e}", r.cost),
            opt(r.error),
            opt(r.error_normalized),
            r.n_nodes.to_string(),
        ];
        if with_baseline {
            rec.push(opt(r.baseline_error));
            rec.push(opt(r.baseline_error_normalized));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One time step of a snapshot stream. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub t: usize,
    pub edges: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Node list fixing this step's node set and order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<PathBuf>,
    /// Ground-truth latent positions (embedding CSV) for error reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Incoming ground-truth positions for directed streams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_in: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    #[serde(default)]
    pub directed: bool,
    pub steps: Vec<SnapshotEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A loaded snapshot with its node ids and optional ground truth `P`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: usize,
    pub adjacency: AdjacencyMatrix,
    pub mask: ObservationMask,
    pub ids: Vec<String>,
    pub truth: Option<DMatrix<f64>>,
}

impl SnapshotManifest {
    /// Loads either a JSON index or a directory with one subdirectory per step. Step
    /// directories are visited in name order and may hold `edges.tsv`, `mask.tsv`,
    /// `nodes.txt`, `truth.csv` and `truth_in.csv`.
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            return Self::from_directory(path);
        }
        let text = fs::read_to_string(path)?;
        let mut manifest: SnapshotManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    fn from_directory(dir: &Path) -> Result<Self> {
        let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        let optional = |p: PathBuf| p.exists().then_some(p);
        let steps = subdirs
            .into_iter()
            .enumerate()
            .map(|(t, d)| SnapshotEntry {
                t,
                edges: d.join("edges.tsv"),
                mask: optional(d.join("mask.tsv")),
                nodes: optional(d.join("nodes.txt")),
                truth: optional(d.join("truth.csv")),
                truth_in: optional(d.join("truth_in.csv")),
            })
            .collect();
        let manifest = SnapshotManifest {
            directed: false,
            steps,
            base_dir: PathBuf::new(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Manifest("manifest lists no steps".into()));
        }
        for pair in self.steps.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(Error::Manifest(format!(
                    "step t={} follows t={}; times must increase",
                    pair[1].t, pair[0].t
                )));
            }
        }
        for step in &self.steps {
            if self.directed != step.truth_in.is_some() && step.truth.is_some() {
                return Err(Error::Manifest(format!(
                    "step t={}: directed streams need both truth and truth_in, undirected ones only truth",
                    step.t
                )));
            }
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads step `k`; every error is prefixed with the step's time.
    pub fn load_step(&self, k: usize) -> Result<Snapshot> {
        let step = self
            .steps
            .get(k)
            .ok_or_else(|| Error::Manifest(format!("no step with index {k}")))?;
        self.load_entry(step)
            .map_err(|e| Error::Manifest(format!("step t={}: {e}", step.t)))
    }

    fn load_entry(&self, step: &SnapshotEntry) -> Result<Snapshot> {
        let nodes = step
            .nodes
            .as_ref()
            .map(|p| read_node_list(&self.resolve(p)))
            .transpose()?;
        let (adjacency, index) =
            read_edge_list(&self.resolve(&step.edges), Some(self.directed), nodes.as_ref())?;
        let mask = match &step.mask {
            Some(p) => read_mask(&self.resolve(p), &index, self.directed)?,
            None => ObservationMask::hollow(index.len(), self.directed)?,
        };
        let truth = match &step.truth {
            Some(p) => {
                let left = aligned_positions(&self.resolve(p), &index)?;
                let right = match &step.truth_in {
                    Some(q) => aligned_positions(&self.resolve(q), &index)?,
                    None => left.clone(),
                };
                Some(&left * right.transpose())
            }
            None => None,
        };
        Ok(Snapshot {
            t: step.t,
            adjacency,
            mask,
            ids: index.ids().to_vec(),
            truth,
        })
    }
}

/// Reads an embedding CSV and reorders its rows to match `index`.
pub fn aligned_positions(path: &Path, index: &NodeIndex) -> Result<DMatrix<f64>> {
    let (ids, x) = read_embedding_csv(path)?;
    align_rows(&ids, &x, index.ids())
}

/// Reorders rows of `x` (labelled by `ids`) into the order of `target`.
pub fn align_rows(ids: &[String], x: &DMatrix<f64>, target: &[String]) -> Result<DMatrix<f64>> {
    if ids.len() != target.len() {
        return Err(Error::InvalidConfig(format!(
            "node sets differ: {} versus {} nodes",
            ids.len(),
            target.len()
        )));
    }
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut rows = Vec::with_capacity(target.len());
    for id in target {
        rows.push(*pos.get(id.as_str()).ok_or_else(|| Error::UnknownNode(id.clone()))?);
    }
    Ok(x.select_rows(rows.iter()))
}
