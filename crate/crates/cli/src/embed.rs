use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use rdpg::io::{read_edge_list, read_mask, write_embedding_csv, write_json, write_trace_csv, NodeIndex};
use rdpg::{
    ase, ase_directed, cost_directed, cost_undirected, elbow_dimension, solve_bcd_masked,
    solve_gd, solve_riemannian_gd, AdjacencyMatrix, ArmijoConfig, DMatrix, Init,
    ObservationMask, SolveReport, SolverConfig,
};
use serde_json::{json, Value};

use crate::args::{EmbedArgs, InitKind, Method, SolverArgs};

/// Result of one embedding run, enough to pick the exit status.
pub struct EmbedOutcome {
    pub converged: bool,
    pub summary: Value,
}

pub fn load_graph(
    input: &Path,
    mask: Option<&Path>,
    directed: bool,
) -> Result<(AdjacencyMatrix, ObservationMask, NodeIndex)> {
    let (a, index) = read_edge_list(input, directed.then_some(true), None)
        .with_context(|| format!("reading {}", input.display()))?;
    let m = match mask {
        Some(p) => read_mask(p, &index, a.directed()).with_context(|| format!("reading {}", p.display()))?,
        None => ObservationMask::hollow(a.n(), a.directed())?,
    };
    Ok((a, m, index))
}

fn solver_config(s: &SolverArgs, d: usize, seed: u64, trace: bool) -> SolverConfig {
    let init = match s.init {
        InitKind::Spectral => Init::Spectral,
        InitKind::Random => Init::Random { scale: None, seed },
    };
    let mut cfg = SolverConfig::new(d)
        .with_init(init)
        .with_max_iters(s.max_iters)
        .with_tol(s.tol);
    cfg.step_size = s.step_size;
    if trace {
        cfg = cfg.with_trace();
    }
    cfg
}

fn armijo(s: &SolverArgs) -> ArmijoConfig {
    ArmijoConfig {
        initial_step: s.armijo_step,
        backtrack: s.armijo_beta,
        sufficient_decrease: s.armijo_c,
        max_backtracks: s.armijo_backtracks,
    }
}

/// `A` with unobserved entries zeroed, for the spectral methods.
fn masked(a: &AdjacencyMatrix, m: &ObservationMask) -> Result<AdjacencyMatrix> {
    Ok(AdjacencyMatrix::new(a.entries().component_mul(m.entries()), a.directed())?)
}

fn as_directed(a: &AdjacencyMatrix, m: &ObservationMask) -> Result<(AdjacencyMatrix, ObservationMask)> {
    Ok((
        AdjacencyMatrix::new(a.entries().clone(), true)?,
        ObservationMask::new(m.entries().clone(), true)?,
    ))
}

pub fn run(args: &EmbedArgs, seed: u64, out: &Path) -> Result<EmbedOutcome> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (a, m, index) = load_graph(&args.input, args.mask.as_deref(), args.directed)?;
    let ids = index.ids();
    let d = match args.solver.d {
        Some(d) => d,
        None => {
            let d = elbow_dimension(&masked(&a, &m)?, args.solver.d_max)?;
            info!("elbow picked d = {d}");
            d
        }
    };
    let cfg = solver_config(&args.solver, d, seed, args.trace);

    let mut report = match (args.method, a.directed()) {
        (Method::Ase, false) => {
            let x = ase(&masked(&a, &m)?, d)?;
            write_embedding_csv(&out.join("embedding.csv"), ids, x.matrix())?;
            closed_form_report(cost_undirected(&a, &m, x.matrix())?)
        }
        (Method::Ase, true) => {
            let e = ase_directed(&masked(&a, &m)?, d)?;
            write_pair(out, ids, e.left(), e.right())?;
            closed_form_report(cost_directed(&a, &m, e.left(), e.right())?)
        }
        (Method::Gd | Method::Bcd, true) => {
            bail!("{:?} embeds undirected graphs only; use --method rgd", args.method)
        }
        (Method::Gd, false) => {
            let (x, report) = solve_gd(&a, &m, &cfg)?;
            write_embedding_csv(&out.join("embedding.csv"), ids, x.matrix())?;
            report
        }
        (Method::Bcd, false) => {
            let (x, report) = solve_bcd_masked(&a, &m, &cfg)?;
            write_embedding_csv(&out.join("embedding.csv"), ids, x.matrix())?;
            report
        }
        (Method::Rgd, directed) => {
            let (da, dm) = if directed { (a.clone(), m.clone()) } else { as_directed(&a, &m)? };
            let (e, report) = solve_riemannian_gd(&da, &dm, &cfg, &armijo(&args.solver))?;
            write_pair(out, ids, e.left(), e.right())?;
            report
        }
    };

    if args.trace {
        let trace = report.trace.take().unwrap_or_default();
        write_trace_csv(&out.join("trace.csv"), &trace)?;
    }
    let mut summary = serde_json::to_value(&report)?;
    summary["method"] = serde_json::to_value(args.method)?;
    summary["d"] = json!(d);
    summary["n"] = json!(a.n());
    summary["directed"] = json!(a.directed());
    summary["seed"] = json!(seed);
    write_json(&out.join("report.json"), &summary)?;
    info!(
        "cost {:e} -> {:e} in {} iterations (converged: {})",
        report.initial_cost, report.final_cost, report.iters, report.converged
    );
    Ok(EmbedOutcome {
        converged: report.converged,
        summary,
    })
}

fn closed_form_report(cost: f64) -> SolveReport {
    SolveReport {
        final_cost: cost,
        initial_cost: cost,
        iters: 0,
        converged: true,
        warnings: 0,
        max_constraint_violation: None,
        trace: Some(vec![cost]),
    }
}

fn write_pair(out: &Path, ids: &[String], left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<()> {
    write_embedding_csv(&out.join("embedding_out.csv"), ids, left)?;
    write_embedding_csv(&out.join("embedding_in.csv"), ids, right)?;
    Ok(())
}
