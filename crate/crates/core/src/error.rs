use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("need at least {min} observations, got {found}")]
    TooFewObservations { min: usize, found: usize },

    #[error("ragged data: row {row} has {found} columns, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid distance matrix: {0}")]
    InvalidDistance(String),

    #[error("graph K must be at least 1")]
    ZeroGraphK,

    #[error("{requested}-MST is infeasible for n = {n}: max feasible K = {max_feasible}")]
    InfeasibleMst {
        requested: usize,
        max_feasible: usize,
        n: usize,
    },

    #[error("K-NN needs 1 <= K <= n - 1 (K = {k}, n = {n})")]
    InvalidNeighborCount { k: usize, n: usize },

    #[error("{msg} at line {line}")]
    Record { line: usize, msg: String },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("n < 4: null variance undefined (n = {n})")]
    DegenerateMoments { n: usize },

    #[error("permutation-null variance is degenerate")]
    DegenerateVariance,

    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },

    #[error("invalid cluster sizes: {0}")]
    InvalidSizes(String),

    #[error("invalid k range {kmin}..={kmax} for n = {n}")]
    InvalidRange { kmin: usize, kmax: usize, n: usize },

    #[error("k-means needs 1 <= k <= n (k = {k}, n = {n})")]
    InvalidClusterCount { k: usize, n: usize },

    #[error("invalid k-means configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "{count} label placements exceed the enumeration limit {limit}; use Monte Carlo moments"
    )]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("Monte Carlo needs at least {min} draws, got {found}")]
    TooFewDraws { min: usize, found: usize },

    #[error("accuracy supports at most {max} clusters, got {found}")]
    TooManyClusters { max: usize, found: usize },

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("scenario config: {0}")]
    ScenarioConfig(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
