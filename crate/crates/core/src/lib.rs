//! Graph-based selection of the number of clusters.
//!
//! A similarity graph (K-MST, K-NN or user supplied) is built once over the
//! observations. For each candidate `k` a clustering is scored by how many
//! graph edges fall within clusters, standardized by the exact mean and
//! variance of that count under random relabeling; the `k` with the largest
//! standardized score is selected.
//!
//! Counting statistics are generic over [`Scalar`] so they can be evaluated
//! in `f64` or exactly in [`BigRational`]; geometry is generic over [`Real`].

pub mod cluster;
pub mod data;
pub mod edgecount;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod scalar;
pub mod seed;
pub mod simlab;
pub mod verify;

pub use num_rational::BigRational;

pub use cluster::{
    accuracy, kmeans, AccuracyReport, DirLabeler, KMeansConfig, KMeansFit, KMeansLabeler,
};
pub use data::{pairwise_distances, DataMatrix, DistanceMatrix, Metric};
pub use edgecount::{
    estimate_k, null_moments, q_statistic, select_k, ClusterLabels, InvalidReason, Labeler,
    LabelerError, NullMoments, QEvaluator, QProfile, QRecord,
};
pub use error::{Error, Result};
pub use graph::{build_kmst, build_knn, graph_stats, Edge, GraphStats, SimilarityGraph};
pub use scalar::{relative_error, Real, Scalar};
pub use seed::{derive_seed, rng_for};

pub type DataMatrix64 = DataMatrix<f64>;
pub type DistanceMatrix64 = DistanceMatrix<f64>;
pub type SimilarityGraph64 = SimilarityGraph<f64>;
pub type GraphStats64 = GraphStats<f64>;
pub type ExactGraphStats = GraphStats<BigRational>;
pub type NullMoments64 = NullMoments<f64>;
pub type ExactMoments = NullMoments<BigRational>;
pub type QRecord64 = QRecord<f64>;
pub type QProfile64 = QProfile<f64>;
pub type ExactQProfile = QProfile<BigRational>;
