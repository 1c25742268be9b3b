//! `graphclust`: estimate the number of clusters from within-cluster edge
//! counts on a similarity graph.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphclust::Metric;
use serde::Serialize;

pub const THREADS_ENV: &str = "GRAPHCLUST_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "graphclust",
    version,
    about = "Graph-based estimation of the number of clusters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select k by maximizing Q(k) over kmin..=kmax.
    Estimate(EstimateArgs),
    /// Run seeded replicates of a synthetic scenario and tabulate selected k.
    Simulate(SimulateArgs),
    /// Check the closed-form null moments against permutation oracles.
    Verify(VerifyArgs),
    /// Build a similarity graph and write it as an edge list.
    Graph(GraphArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Kmst,
    Knn,
    External,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClustererKind {
    Kmeans,
    LabelsDir,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultArg {
    FlipPairTerm,
}

/// Where observations come from and how the graph is built.
#[derive(Args, Debug, Clone, Serialize)]
pub struct GraphInput {
    /// Data CSV, one observation per row (a non-numeric first row is a header).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Treat --input as a precomputed n x n distance matrix.
    #[arg(long)]
    pub distances: bool,
    #[arg(long, value_enum, default_value = "kmst")]
    pub graph: GraphKind,
    /// Edge list (`u,v` or `u,v,w` per line, 0-based) for --graph external.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// K for the K-MST or K-NN graph.
    #[arg(long, default_value_t = 10)]
    pub graph_k: usize,
    #[arg(long, default_value = "euclidean")]
    pub metric: Metric,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphInput,
    #[arg(long, default_value_t = 2)]
    pub kmin: usize,
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    #[arg(long, value_enum, default_value = "kmeans")]
    pub clusterer: ClustererKind,
    /// Directory holding labels_k{K}.txt files for --clusterer labels-dir.
    #[arg(long)]
    pub labels_dir: Option<PathBuf>,
    /// k-means restarts per k.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Profile artifact path; omitted means stdout only.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    /// Scenario id: I, II, III, IV, V or null.
    #[arg(long)]
    pub scenario: String,
    /// Scenario TOML file replacing the built-in parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    #[arg(long, default_value_t = 10)]
    pub graph_k: usize,
    #[arg(long, default_value = "euclidean")]
    pub metric: Metric,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Override the scenario dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for frequency.csv, accuracy.csv and run.json.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo permutations for the n = 60 block.
    #[arg(long, default_value_t = 100_000)]
    pub mc_draws: usize,
    /// Random graphs in the exhaustive block.
    #[arg(long, default_value_t = 50)]
    pub graphs: usize,
    /// JSON report path.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<FaultArg>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GraphArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphInput,
    /// Edge-list path; omitted means stdout.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    NoValidK(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::NoValidK(_) => 2,
            Failure::Verification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::NoValidK(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<graphclust::Error> for Failure {
    fn from(e: graphclust::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        Failure::Input(format!(
            "{THREADS_ENV} must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Input(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Verify(a) => commands::verify(a),
        Command::Graph(a) => commands::graph(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
