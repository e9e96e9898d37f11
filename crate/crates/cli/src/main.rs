//! `rdpg` command-line front end: synthetic generators, embedding, tracking and evaluation.

mod args;
mod embed;
mod eval;
mod generate;
mod track;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::Parser;
use log::error;
use rayon::prelude::*;
use rdpg::io::{read_edge_list, write_json};
use rdpg::elbow_dimension;
use serde::Serialize;
use serde_json::{json, Value};

use args::{Cli, Command};

const EXIT_INPUT: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_DIMENSION: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Serialize)]
struct Provenance<'a> {
    version: &'static str,
    seed: u64,
    argv: Vec<String>,
    config: &'a Command,
}

struct Run {
    summary: Value,
    converged: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(&cli) {
        Ok(runs) => {
            let summaries: Vec<&Value> = runs.iter().map(|r| &r.summary).collect();
            if cli.json {
                let out = if summaries.len() == 1 { summaries[0].clone() } else { json!(summaries) };
                println!("{out}");
            } else {
                for s in summaries {
                    println!("{}", human(s));
                }
            }
            if runs.iter().all(|r| r.converged) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NOT_CONVERGED)
            }
        }
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<rdpg::Error>()) {
        Some(rdpg::Error::Dimension { .. }) => EXIT_DIMENSION,
        Some(rdpg::Error::Divergence { .. }) => EXIT_DIVERGENCE,
        _ => EXIT_INPUT,
    }
}

fn human(v: &Value) -> String {
    match v.as_object() {
        Some(map) => map
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" "),
        None => v.to_string(),
    }
}

fn run(cli: &Cli) -> Result<Vec<Run>> {
    if cli.replicates == 0 {
        bail!("--replicates must be at least 1");
    }
    let replicable = matches!(cli.command, Command::Generate(_) | Command::Embed(_));
    if cli.replicates > 1 && !replicable {
        bail!("--replicates applies to generate and embed only");
    }
    if cli.replicates == 1 {
        return Ok(vec![run_once(cli, cli.seed, &cli.out)?]);
    }
    let one = |r: usize| -> Result<Run> {
        let dir = cli.out.join(format!("replicate_{r}"));
        let mut run = run_once(cli, cli.seed + r as u64, &dir)?;
        run.summary["replicate"] = json!(r);
        Ok(run)
    };
    if cli.deterministic {
        (0..cli.replicates).map(one).collect()
    } else {
        (0..cli.replicates).into_par_iter().map(one).collect()
    }
}

fn run_once(cli: &Cli, seed: u64, out: &Path) -> Result<Run> {
    let mut converged = true;
    let summary = match &cli.command {
        Command::Generate(g) => generate::run(&g.model, seed, out)?,
        Command::Embed(e) => {
            let outcome = embed::run(e, seed, out)?;
            converged = outcome.converged;
            outcome.summary
        }
        Command::Track(t) => track::run(t, out)?,
        Command::Eval(e) => return Ok(Run { summary: eval::run(e)?, converged }),
        Command::Elbow(e) => {
            let (a, _) = read_edge_list(&e.input, e.directed.then_some(true), None)?;
            let d = elbow_dimension(&a, e.d_max)?;
            return Ok(Run {
                summary: json!({ "d": d, "n": a.n(), "directed": a.directed() }),
                converged,
            });
        }
    };
    write_provenance(cli, seed, out)?;
    Ok(Run { summary, converged })
}

fn write_provenance(cli: &Cli, seed: u64, out: &Path) -> Result<()> {
    let prov = Provenance {
        version: env!("CARGO_PKG_VERSION"),
        seed,
        argv: std::env::args().collect(),
        config: &cli.command,
    };
    write_json(&PathBuf::from(out).join("provenance.json"), &prov)?;
    Ok(())
}
