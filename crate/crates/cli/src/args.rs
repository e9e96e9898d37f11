use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "rdpg", version, about = "Random dot product graph embeddings")]
pub struct Cli {
    /// Seed for every random draw; replicate `r` uses `seed + r`.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = "rdpg-out")]
    pub out: PathBuf,

    /// Print a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    /// Run replicates one after another instead of on a worker pool.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Independent seeded runs, written to `replicate_<r>` subdirectories.
    #[arg(long, global = true, default_value_t = 1)]
    pub replicates: usize,

    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Sample a synthetic graph or snapshot stream.
    Generate(GenerateArgs),
    /// Embed one graph.
    Embed(EmbedArgs),
    /// Track embeddings over a snapshot manifest.
    Track(TrackArgs),
    /// Compare two embeddings.
    Eval(EvalArgs),
    /// Suggest an embedding dimension from the scree plot.
    Elbow(ElbowArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[command(subcommand)]
    pub model: Model,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    /// Erdős–Rényi graph.
    Er {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        directed: bool,
    },
    /// Stochastic block model.
    Sbm(SbmArgs),
    /// SBM whose labels change by one random node per step.
    DynamicSbm {
        #[command(flatten)]
        sbm: SbmArgs,
        /// Number of transitions after the initial snapshot.
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
    /// Bipartite senator/law voting digraph.
    Senate {
        /// Senators per party.
        #[arg(long, value_delimiter = ',', default_values_t = [50, 50])]
        senators: Vec<usize>,
        /// Party-1, party-2 and bipartisan law counts.
        #[arg(long, value_delimiter = ',', default_values_t = [50, 200, 40])]
        laws: Vec<usize>,
    },
    /// Erdős–Rényi graph that gains one node per step.
    GrowingEr {
        #[arg(long, default_value_t = 100)]
        n0: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SbmArgs {
    /// Number of blocks; defaults to the number of sizes.
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    /// Within-block probability.
    #[arg(long, required_unless_present = "pi")]
    pub p: Option<f64>,
    /// Between-block probability.
    #[arg(long, required_unless_present = "pi")]
    pub q: Option<f64>,
    /// Full block matrix, rows separated by `;` and entries by `,`.
    #[arg(long, conflicts_with_all = ["p", "q"])]
    pub pi: Option<String>,
    #[arg(long)]
    pub directed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ase,
    Gd,
    Bcd,
    Rgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Spectral,
    Random,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Embedding dimension; omitted means the scree elbow up to `--d-max`.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub d_max: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Relative cost decrease below which a solver stops.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// Fixed GD step; by default derived from the spectrum (GD) or line-searched (RGD).
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long, value_enum, default_value_t = InitKind::Spectral)]
    pub init: InitKind,
    #[arg(long, default_value_t = 1.0)]
    pub armijo_step: f64,
    #[arg(long, default_value_t = 0.5)]
    pub armijo_beta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub armijo_c: f64,
    #[arg(long, default_value_t = 30)]
    pub armijo_backtracks: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EmbedArgs {
    /// Edge list `src<TAB>dst[<TAB>weight]`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Bcd)]
    pub method: Method,
    /// Unobserved pairs, same format as the edge list.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Treat the edge list as directed; by default inferred from the file.
    #[arg(long)]
    pub directed: bool,
    /// Write the per-iteration cost to `trace.csv`.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackMethodArg {
    Gd,
    Bcd,
    Rgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Passthrough,
    MovingAverage,
    SinglePole,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrackArgs {
    /// JSON manifest, or a directory with one subdirectory per step.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = TrackMethodArg::Gd)]
    pub method: TrackMethodArg,
    #[arg(long)]
    pub d: usize,
    /// Solver iterations per snapshot; defaults to 10 (GD, RGD) or 1 (BCD).
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long, value_enum, default_value_t = FilterKind::Passthrough)]
    pub filter: FilterKind,
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    /// Also report the frozen-embedding least-squares baseline (undirected streams only).
    #[arg(long)]
    pub baseline: bool,
    /// Skip the per-step embedding CSVs.
    #[arg(long)]
    pub no_step_embeddings: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Embedding CSV.
    #[arg(long)]
    pub a: PathBuf,
    /// Second embedding CSV, or ground-truth positions.
    #[arg(long)]
    pub b: PathBuf,
    /// Incoming factor of `--a` for directed embeddings.
    #[arg(long, requires = "b_in")]
    pub a_in: Option<PathBuf>,
    /// Incoming factor of `--b`.
    #[arg(long, requires = "a_in")]
    pub b_in: Option<PathBuf>,
    /// Edge list for the masked cost of `--a`.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, requires = "edges")]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ElbowArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub d_max: usize,
    #[arg(long)]
    pub directed: bool,
}
