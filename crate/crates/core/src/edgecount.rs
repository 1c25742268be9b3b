//! Within-cluster edge counts and the graph-based statistic `Q(k)`.
//!
//! For a labeling with clusters `C_1..C_k` of sizes `n_i`, `R_i` counts graph
//! edges with both endpoints in `C_i`. Under the permutation null (labels
//! reshuffled uniformly over vertices, sizes fixed) the moments of `R_i` have
//! closed forms in `|G|`, the degree spread `G_C` and the pair term `G_E`;
//! `Q(k)` is the squared standardized deviation of `W = sum_i R_i / n_i`.

use std::collections::HashMap;
use std::fmt::{self, Display, Write as _};
use std::hash::Hash;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{graph_stats, GraphStats, SimilarityGraph};
use crate::scalar::Scalar;

/// Assignment of `n` observations to `k` non-empty clusters, stored with
/// 0-based ids (`0..k`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterLabels {
    assignments: Vec<usize>,
    sizes: Vec<usize>,
}

impl ClusterLabels {
    /// Every id must lie in `0..k` and every cluster must be used.
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::TooFewObservations { min: 1, found: 0 });
        }
        let mut sizes = vec![0; k];
        for &a in &assignments {
            if a >= k {
                return Err(Error::InvalidSizes(format!(
                    "cluster id {a} outside 0..{k}"
                )));
            }
            sizes[a] += 1;
        }
        if let Some(c) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster { cluster: c });
        }
        Ok(Self { assignments, sizes })
    }

    /// Compacts arbitrary ids to `0..k` in order of first appearance.
    pub fn from_ids<I: Hash + Eq + Copy>(ids: &[I]) -> Result<Self> {
        let mut map = HashMap::new();
        let assignments: Vec<usize> = ids
            .iter()
            .map(|id| {
                let next = map.len();
                *map.entry(*id).or_insert(next)
            })
            .collect();
        let k = map.len();
        Self::new(assignments, k)
    }

    /// Labels `0,..,0,1,..,1,..` with the given block sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let assignments = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect();
        Self::new(assignments, sizes.len())
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.assignments[i]
    }

    /// Ids renamed through `map` (a permutation of `0..k`).
    pub fn rename(&self, map: &[usize]) -> Result<Self> {
        Self::new(self.assignments.iter().map(|&a| map[a]).collect(), self.k())
    }

    /// Observation `i` of the result is observation `order[i]` of `self`.
    pub fn permute(&self, order: &[usize]) -> Self {
        Self {
            assignments: order.iter().map(|&i| self.assignments[i]).collect(),
            sizes: self.sizes.clone(),
        }
    }
}

/// `R_j` for every cluster, in one pass over the edges.
pub fn within_counts<W>(g: &SimilarityGraph<W>, labels: &ClusterLabels) -> Result<Vec<usize>>
where
    W: Clone,
{
    if labels.n() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            found: labels.n(),
        });
    }
    let mut counts = vec![0; labels.k()];
    for e in g.edges() {
        let c = labels.cluster_of(e.u);
        if c == labels.cluster_of(e.v) {
            counts[c] += 1;
        }
    }
    Ok(counts)
}

/// Permutation-null moments of the `R_i` and of `W = sum_i R_i / n_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullMoments<S> {
    pub expected: Vec<S>,
    pub variance: Vec<S>,
    /// Full `k x k` covariance; the diagonal repeats `variance`.
    pub covariance: Vec<Vec<S>>,
    pub weighted_mean: S,
    pub weighted_variance: S,
}

impl<S: Scalar> NullMoments<S> {
    pub fn k(&self) -> usize {
        self.expected.len()
    }
}

fn check_sizes(n: usize, sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::InvalidSizes("no clusters".into()));
    }
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster { cluster: c });
    }
    let total: usize = sizes.iter().sum();
    if total != n {
        return Err(Error::InvalidSizes(format!(
            "sizes sum to {total}, graph has {n} vertices"
        )));
    }
    Ok(())
}

/// Closed-form permutation-null moments for cluster sizes `sizes`.
///
/// `E(R_i) = |G| n_i(n_i-1) / (n(n-1))`
///
/// `Var(R_i) = n_i(n_i-1)(n-n_i) / (n)_4 * [(n-n_i-1)(|G| - G_E) + (n_i-2) G_C]`
///
/// `Cov(R_i,R_j) = n_i n_j (n_i-1)(n_j-1) / (n)_4 * [|G| - G_C - G_E]`
///
/// with `(n)_4 = n(n-1)(n-2)(n-3)`. The variance is written with the factor
/// `n - n_i - 1` multiplied through, which keeps it defined at `n_i = n - 1`.
pub fn null_moments<S: Scalar>(stats: &GraphStats<S>, sizes: &[usize]) -> Result<NullMoments<S>> {
    let n = stats.n;
    check_sizes(n, sizes)?;
    let k = sizes.len();
    let size_g = S::from_count(stats.edges);
    let c = |x: usize| S::from_count(x);
    // Signed because n_i - 2 and n - n_i - 1 can be -1.
    let s = |x: i128| S::from_wide(x);

    if k == 1 {
        let zero = S::zero();
        return Ok(NullMoments {
            expected: vec![size_g.clone()],
            variance: vec![zero.clone()],
            covariance: vec![vec![zero.clone()]],
            weighted_mean: size_g / c(n),
            weighted_variance: zero,
        });
    }
    if n < 4 {
        return Err(Error::DegenerateMoments { n });
    }

    let pairs = c(n) * c(n - 1);
    let falling4 = pairs.clone() * c(n - 2) * c(n - 3);
    let gc = stats.degree_spread.clone();
    let ge = stats.pair_term.clone();

    let expected: Vec<S> = sizes
        .iter()
        .map(|&ni| size_g.clone() * c(ni) * c(ni - 1) / pairs.clone())
        .collect();
    let variance: Vec<S> = sizes
        .iter()
        .map(|&ni| {
            let (ni_w, n_w) = (ni as i128, n as i128);
            let lead = c(ni) * c(ni - 1) * c(n - ni) / falling4.clone();
            let bracket =
                s(n_w - ni_w - 1) * (size_g.clone() - ge.clone()) + s(ni_w - 2) * gc.clone();
            lead * bracket
        })
        .collect();
    let cross = size_g.clone() - gc - ge;
    let mut covariance = vec![vec![S::zero(); k]; k];
    for i in 0..k {
        for j in 0..k {
            covariance[i][j] = if i == j {
                variance[i].clone()
            } else {
                let (a, b) = (sizes[i], sizes[j]);
                c(a) * c(b) * c(a - 1) * c(b - 1) / falling4.clone() * cross.clone()
            };
        }
    }

    let weighted_mean = expected
        .iter()
        .zip(sizes)
        .fold(S::zero(), |acc, (e, &ni)| acc + e.clone() / c(ni));
    let mut weighted_variance = S::zero();
    for i in 0..k {
        weighted_variance = weighted_variance + variance[i].clone() / (c(sizes[i]) * c(sizes[i]));
        for j in i + 1..k {
            weighted_variance = weighted_variance
                + S::from_count(2) * covariance[i][j].clone() / (c(sizes[i]) * c(sizes[j]));
        }
    }

    Ok(NullMoments {
        expected,
        variance,
        covariance,
        weighted_mean,
        weighted_variance,
    })
}

/// `W = sum_i R_i / n_i`.
pub fn weighted_within<S: Scalar>(counts: &[usize], sizes: &[usize]) -> S {
    counts.iter().zip(sizes).fold(S::zero(), |acc, (&r, &ni)| {
        acc + S::from_count(r) / S::from_count(ni)
    })
}

/// Why a `k` was excluded from the argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidReason {
    DegenerateVariance,
    EmptyCluster,
    ClustererFailure,
}

impl InvalidReason {
    pub fn as_str(self) -> &'static str {
        match self {
            InvalidReason::DegenerateVariance => "degenerate-variance",
            InvalidReason::EmptyCluster => "empty-cluster",
            InvalidReason::ClustererFailure => "clusterer-failure",
        }
    }
}

impl Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-`k` evaluation of the statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QRecord<S> {
    pub k: usize,
    #[serde(rename = "W")]
    pub w: Option<S>,
    #[serde(rename = "E")]
    pub e: Option<S>,
    pub var: Option<S>,
    #[serde(rename = "Q")]
    pub q: Option<S>,
    /// Signed `(W - E) / sqrt(Var)`; positive means more within-cluster edges
    /// than expected under the null.
    pub z: Option<f64>,
    pub valid: bool,
    pub reason: Option<InvalidReason>,
    #[serde(skip)]
    pub detail: Option<String>,
}

impl<S> QRecord<S> {
    pub fn failed(k: usize, reason: InvalidReason, detail: impl Into<String>) -> Self {
        Self {
            k,
            w: None,
            e: None,
            var: None,
            q: None,
            z: None,
            valid: false,
            reason: Some(reason),
            detail: Some(detail.into()),
        }
    }
}

/// Variance threshold below which `Q` is treated as undefined:
/// `1e-10 * max(1, |G|^2 / n^2)`.
pub fn variance_floor<S: Scalar>(edges: usize, n: usize) -> S {
    let ratio =
        S::from_wide((edges as i128) * (edges as i128)) / S::from_wide((n as i128) * (n as i128));
    let one = S::one();
    let scale = if ratio > one { ratio } else { one };
    S::from_f64(1e-10).expect("1e-10 representable") * scale
}

/// Evaluates `Q` for many labelings of one graph; graph statistics are
/// computed once.
#[derive(Debug, Clone)]
pub struct QEvaluator<'g, S, W> {
    graph: &'g SimilarityGraph<W>,
    stats: GraphStats<S>,
    floor: S,
}

impl<'g, S: Scalar, W: Clone> QEvaluator<'g, S, W> {
    pub fn new(graph: &'g SimilarityGraph<W>) -> Self {
        Self::with_stats(graph, graph_stats(graph))
    }

    /// Uses caller-supplied statistics (for fault injection in verification).
    pub fn with_stats(graph: &'g SimilarityGraph<W>, stats: GraphStats<S>) -> Self {
        let floor = variance_floor(stats.edges, stats.n);
        Self {
            graph,
            stats,
            floor,
        }
    }

    pub fn stats(&self) -> &GraphStats<S> {
        &self.stats
    }

    pub fn evaluate(&self, labels: &ClusterLabels) -> Result<QRecord<S>> {
        let counts = within_counts(self.graph, labels)?;
        let moments = null_moments(&self.stats, labels.sizes())?;
        let w: S = weighted_within(&counts, labels.sizes());
        let e = moments.weighted_mean;
        let var = moments.weighted_variance;
        let dev = w.clone() - e.clone();
        let (q, z, valid, reason) = if var > self.floor {
            let q = dev.clone() * dev.clone() / var.clone();
            let z = dev.to_f64_lossy() / var.to_f64_lossy().sqrt();
            (Some(q), Some(z), true, None)
        } else {
            (None, None, false, Some(InvalidReason::DegenerateVariance))
        };
        Ok(QRecord {
            k: labels.k(),
            w: Some(w),
            e: Some(e),
            var: Some(var),
            q,
            z,
            valid,
            reason,
            detail: None,
        })
    }
}

/// `Q` for one labeling: `(W - E[W])^2 / Var(W)`, or an invalid record when
/// the null variance is degenerate.
pub fn q_statistic<S: Scalar, W: Clone>(
    g: &SimilarityGraph<W>,
    labels: &ClusterLabels,
) -> Result<QRecord<S>> {
    QEvaluator::new(g).evaluate(labels)
}

/// Failure reported by a [`Labeler`] for one `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelerError {
    EmptyCluster { expected: usize, found: usize },
    Failed(String),
}

impl Display for LabelerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelerError::EmptyCluster { expected, found } => {
                write!(f, "expected {expected} non-empty clusters, found {found}")
            }
            LabelerError::Failed(msg) => f.write_str(msg),
        }
    }
}

/// Source of a clustering for each candidate `k`.
pub trait Labeler: Sync {
    fn labels(&self, k: usize) -> std::result::Result<ClusterLabels, LabelerError>;
}

impl<F> Labeler for F
where
    F: Fn(usize) -> std::result::Result<ClusterLabels, LabelerError> + Sync,
{
    fn labels(&self, k: usize) -> std::result::Result<ClusterLabels, LabelerError> {
        self(k)
    }
}

/// The `Q(k)` curve over a range of `k` and its argmax.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QProfile<S> {
    pub chosen_k: Option<usize>,
    pub records: Vec<QRecord<S>>,
}

impl<S: Scalar> QProfile<S> {
    pub fn from_records(records: Vec<QRecord<S>>) -> Self {
        let chosen_k = select_k(&records);
        Self { chosen_k, records }
    }

    pub fn record(&self, k: usize) -> Option<&QRecord<S>> {
        self.records.iter().find(|r| r.k == k)
    }

    /// Summary of why no `k` could be selected, e.g.
    /// `"no valid k: degenerate-variance x2, clusterer-failure x1"`.
    pub fn failure_summary(&self) -> Option<String> {
        if self.chosen_k.is_some() {
            return None;
        }
        let mut tally: Vec<(InvalidReason, usize)> = Vec::new();
        for r in self.records.iter().filter_map(|r| r.reason) {
            match tally.iter_mut().find(|(x, _)| *x == r) {
                Some((_, c)) => *c += 1,
                None => tally.push((r, 1)),
            }
        }
        let parts: Vec<String> = tally.iter().map(|(r, c)| format!("{r} x{c}")).collect();
        Some(format!("no valid k: {}", parts.join(", ")))
    }
}

impl<S: Scalar + Display> QProfile<S> {
    /// One row per `k`: `k,W,E,var,Q,z,valid,reason`.
    pub fn to_csv(&self) -> String {
        fn opt<T: Display>(v: &Option<T>) -> String {
            v.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        let mut s = String::from("k,W,E,var,Q,z,valid,reason\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.k,
                opt(&r.w),
                opt(&r.e),
                opt(&r.var),
                opt(&r.q),
                opt(&r.z),
                r.valid,
                r.reason.map(InvalidReason::as_str).unwrap_or("")
            );
        }
        s
    }
}

/// Largest `Q` among valid records; the smallest `k` wins ties.
pub fn select_k<S: Scalar>(records: &[QRecord<S>]) -> Option<usize> {
    let mut best: Option<(usize, &S)> = None;
    let mut sorted: Vec<&QRecord<S>> = records.iter().collect();
    sorted.sort_by_key(|r| r.k);
    for r in sorted {
        if let (true, Some(q)) = (r.valid, r.q.as_ref()) {
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((r.k, q));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// Evaluates `Q(k)` for `k` in `kmin..=kmax` on one fixed graph and selects
/// `argmax Q`. A labeler failure invalidates only that `k`.
pub fn estimate_k<S, W, L>(
    g: &SimilarityGraph<W>,
    labeler: &L,
    kmin: usize,
    kmax: usize,
) -> Result<QProfile<S>>
where
    S: Scalar,
    W: Clone + Sync,
    L: Labeler + ?Sized,
{
    let n = g.n();
    if n < 4 {
        return Err(Error::DegenerateMoments { n });
    }
    if kmin < 2 || kmin > kmax || kmax > n - 1 {
        return Err(Error::InvalidRange { kmin, kmax, n });
    }
    let evaluator: QEvaluator<S, W> = QEvaluator::new(g);
    let records: Vec<QRecord<S>> = (kmin..=kmax)
        .into_par_iter()
        .map(|k| match labeler.labels(k) {
            Ok(labels) if labels.k() != k => QRecord::failed(
                k,
                InvalidReason::EmptyCluster,
                LabelerError::EmptyCluster {
                    expected: k,
                    found: labels.k(),
                }
                .to_string(),
            ),
            Ok(labels) => match evaluator.evaluate(&labels) {
                Ok(mut rec) => {
                    rec.k = k;
                    rec
                }
                Err(e) => QRecord::failed(k, InvalidReason::ClustererFailure, e.to_string()),
            },
            Err(e @ LabelerError::EmptyCluster { .. }) => {
                QRecord::failed(k, InvalidReason::EmptyCluster, e.to_string())
            }
            Err(e) => QRecord::failed(k, InvalidReason::ClustererFailure, e.to_string()),
        })
        .collect();
    Ok(QProfile::from_records(records))
}
