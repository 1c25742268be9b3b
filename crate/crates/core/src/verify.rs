//! Self-check of the closed-form null moments against the permutation
//! oracles: exact enumeration on small random graphs and Monte Carlo on a
//! 60-vertex K-MST.

use num_rational::BigRational;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::{pairwise_distances, DataMatrix, Metric};
use crate::edgecount::{null_moments, NullMoments};
use crate::error::Result;
use crate::graph::{
    build_kmst, graph_from_edges, graph_stats, EdgeRecord, GraphStats, SimilarityGraph,
};
use crate::oracle::{exhaustive_moments_pair, mc_moments, mc_standardized, ZSummary};
use crate::scalar::Scalar;
use crate::seed::rng_for;

/// Deliberate corruption of the closed form, used to check that the battery
/// can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Negates the pair term `G_E`.
    FlipPairTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySettings {
    pub seed: u64,
    pub exhaustive_graphs: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub rel_tol: f64,
    pub mc_sizes: Vec<usize>,
    pub mc_dim: usize,
    pub graph_k: usize,
    pub mc_draws: usize,
    /// Gate for Monte Carlo moment deviations, in standard errors.
    pub sigma_gate: f64,
    pub fault: Option<Fault>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            seed: 0,
            exhaustive_graphs: 50,
            min_n: 4,
            max_n: 8,
            rel_tol: 1e-12,
            mc_sizes: vec![20, 20, 20],
            mc_dim: 5,
            graph_k: 10,
            mc_draws: 100_000,
            sigma_gate: 4.0,
            fault: None,
        }
    }
}

/// Moments flattened for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub expected: Vec<f64>,
    pub variance: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub weighted_mean: f64,
    pub weighted_variance: f64,
}

impl MomentTable {
    fn new<S: Scalar>(
        expected: &[S],
        covariance: &[Vec<S>],
        weighted_mean: &S,
        weighted_variance: &S,
    ) -> Self {
        let f = |v: &[S]| v.iter().map(Scalar::to_f64_lossy).collect::<Vec<_>>();
        let covariance: Vec<Vec<f64>> = covariance.iter().map(|r| f(r)).collect();
        Self {
            expected: f(expected),
            variance: (0..covariance.len()).map(|i| covariance[i][i]).collect(),
            covariance,
            weighted_mean: weighted_mean.to_f64_lossy(),
            weighted_variance: weighted_variance.to_f64_lossy(),
        }
    }

    fn from_closed<S: Scalar>(m: &NullMoments<S>) -> Self {
        Self::new(
            &m.expected,
            &m.covariance,
            &m.weighted_mean,
            &m.weighted_variance,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustiveCase {
    pub graph: usize,
    pub n: usize,
    pub edges: usize,
    pub sizes: Vec<usize>,
    pub exact: bool,
    pub max_rel_err: f64,
    pub closed_form: MomentTable,
    pub oracle: MomentTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustiveSummary {
    pub graphs: usize,
    pub cases: usize,
    pub exact_mismatches: usize,
    pub max_rel_err: f64,
    /// The first few failing cases in full.
    pub failures: Vec<ExhaustiveCase>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub n: usize,
    pub edges: usize,
    pub sizes: Vec<usize>,
    pub draws: usize,
    pub closed_form: MomentTable,
    pub oracle: MomentTable,
    /// Largest `|closed - oracle| / stderr` over all moments.
    pub max_sigma: f64,
    pub max_rel_err: f64,
    pub z: ZSummary,
    pub z_mean_gate: f64,
    pub z_variance_gate: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub settings: VerifySettings,
    pub exhaustive: ExhaustiveSummary,
    pub monte_carlo: MonteCarloSummary,
    pub pass: bool,
}

const REPORTED_FAILURES: usize = 5;

fn apply_fault<S: Scalar>(mut stats: GraphStats<S>, fault: Option<Fault>) -> GraphStats<S> {
    if let Some(Fault::FlipPairTerm) = fault {
        stats.pair_term = -stats.pair_term;
    }
    stats
}

/// Closed-form moments, optionally corrupted.
pub fn closed_moments<S: Scalar, W: Clone>(
    g: &SimilarityGraph<W>,
    sizes: &[usize],
    fault: Option<Fault>,
) -> Result<NullMoments<S>> {
    null_moments(&apply_fault(graph_stats(g), fault), sizes)
}

/// Every ordered composition of `n` into at least two positive parts.
pub fn compositions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    // Bit i of the mask set means a cut after position i + 1.
    for mask in 1u64..(1u64 << (n - 1)) {
        let mut parts = Vec::new();
        let mut last = 0;
        for i in 0..n - 1 {
            if mask & (1 << i) != 0 {
                parts.push(i + 1 - last);
                last = i + 1;
            }
        }
        parts.push(n - last);
        out.push(parts);
    }
    out
}

/// Erdős–Rényi graph with a random edge probability and at least one edge.
pub fn random_graph(n: usize, seed: u64) -> SimilarityGraph<f64> {
    let mut rng = rng_for(seed, &[]);
    let p: f64 = rng.random_range(0.15..0.85);
    let mut recs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                recs.push(EdgeRecord::new(recs.len() + 1, u, v, None));
            }
        }
    }
    if recs.is_empty() {
        let u = rng.random_range(0..n - 1);
        recs.push(EdgeRecord::new(1, u, u + 1, None));
    }
    graph_from_edges(n, &recs).expect("generated edges are valid")
}

pub fn run_exhaustive(settings: &VerifySettings) -> Result<ExhaustiveSummary> {
    let mut summary = ExhaustiveSummary {
        graphs: settings.exhaustive_graphs,
        cases: 0,
        exact_mismatches: 0,
        max_rel_err: 0.0,
        failures: Vec::new(),
        pass: true,
    };
    for gi in 0..settings.exhaustive_graphs {
        let mut rng = rng_for(settings.seed, &[0, gi as u64]);
        let n = rng.random_range(settings.min_n..=settings.max_n);
        let g = random_graph(n, rng.random());
        for sizes in compositions(n) {
            let (exact, float) = exhaustive_moments_pair::<BigRational, f64, _>(&g, &sizes)?;
            let closed_exact: NullMoments<BigRational> =
                closed_moments(&g, &sizes, settings.fault)?;
            let closed_float: NullMoments<f64> = closed_moments(&g, &sizes, settings.fault)?;
            let is_exact = exact.matches_exactly(&closed_exact);
            let rel = float.max_relative_error(&closed_float);
            summary.cases += 1;
            summary.max_rel_err = summary.max_rel_err.max(rel);
            let ok = is_exact && rel <= settings.rel_tol;
            if !is_exact {
                summary.exact_mismatches += 1;
            }
            if !ok {
                summary.pass = false;
                if summary.failures.len() < REPORTED_FAILURES {
                    summary.failures.push(ExhaustiveCase {
                        graph: gi,
                        n,
                        edges: g.edge_count(),
                        sizes: sizes.clone(),
                        exact: is_exact,
                        max_rel_err: rel,
                        closed_form: MomentTable::from_closed(&closed_float),
                        oracle: MomentTable::new(
                            &float.expected,
                            &float.covariance,
                            &float.weighted_mean,
                            &float.weighted_variance,
                        ),
                    });
                }
            }
        }
    }
    Ok(summary)
}

/// Gaussian point cloud in `dim` dimensions, one row per vertex.
pub fn gaussian_cloud(n: usize, dim: usize, seed: u64) -> DataMatrix<f64> {
    let mut rng = rng_for(seed, &[]);
    let values = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
    DataMatrix::new(n, dim, values).expect("finite gaussian data")
}

fn sigma(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff.abs() / se
    } else if diff.abs() <= 1e-9 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn run_monte_carlo(settings: &VerifySettings) -> Result<MonteCarloSummary> {
    let n: usize = settings.mc_sizes.iter().sum();
    let x = gaussian_cloud(
        n,
        settings.mc_dim,
        crate::seed::derive_seed(settings.seed, &[1]),
    );
    let g = build_kmst(&pairwise_distances(&x, Metric::Euclidean), settings.graph_k)?;
    let sizes = &settings.mc_sizes;
    let closed: NullMoments<f64> = closed_moments(&g, sizes, settings.fault)?;
    let mc = mc_moments(
        &g,
        sizes,
        settings.mc_draws,
        crate::seed::derive_seed(settings.seed, &[2]),
    )?;
    let se = mc
        .stderr
        .as_ref()
        .expect("Monte Carlo estimate carries stderr");

    let mut max_sigma =
        sigma(closed.weighted_mean - mc.weighted_mean, se.weighted_mean).max(sigma(
            closed.weighted_variance - mc.weighted_variance,
            se.weighted_variance,
        ));
    for i in 0..sizes.len() {
        max_sigma = max_sigma.max(sigma(closed.expected[i] - mc.expected[i], se.expected[i]));
        for j in 0..sizes.len() {
            max_sigma = max_sigma.max(sigma(
                closed.covariance[i][j] - mc.covariance[i][j],
                se.covariance[i][j],
            ));
        }
    }

    // The standardized check uses the closed form as implemented; under a
    // fault, standardize with the corrupted moments instead.
    let z = match settings.fault {
        None => mc_standardized(
            &g,
            sizes,
            settings.mc_draws,
            crate::seed::derive_seed(settings.seed, &[3]),
        )?,
        Some(_) => corrupted_z(&mc, &closed),
    };
    let z_mean_gate = 0.02f64.max(settings.sigma_gate * z.mean_stderr);
    let z_variance_gate = 0.05f64.max(settings.sigma_gate * z.variance_stderr);
    let pass = max_sigma <= settings.sigma_gate
        && z.mean.abs() <= z_mean_gate
        && (z.variance - 1.0).abs() <= z_variance_gate;

    Ok(MonteCarloSummary {
        n,
        edges: g.edge_count(),
        sizes: sizes.clone(),
        draws: settings.mc_draws,
        max_rel_err: mc.max_relative_error(&closed),
        closed_form: MomentTable::from_closed(&closed),
        oracle: MomentTable::new(
            &mc.expected,
            &mc.covariance,
            &mc.weighted_mean,
            &mc.weighted_variance,
        ),
        max_sigma,
        z,
        z_mean_gate,
        z_variance_gate,
        pass,
    })
}

/// Moments of `Z` implied by the Monte Carlo `W` moments when `Z` is
/// standardized with (possibly wrong) closed-form moments.
fn corrupted_z(mc: &crate::oracle::OracleEstimate<f64>, closed: &NullMoments<f64>) -> ZSummary {
    let sd = closed.weighted_variance.sqrt();
    let se = mc.stderr.as_ref().expect("stderr");
    ZSummary {
        draws: mc.draws as usize,
        mean: (mc.weighted_mean - closed.weighted_mean) / sd,
        variance: mc.weighted_variance / closed.weighted_variance,
        mean_stderr: se.weighted_mean / sd,
        variance_stderr: se.weighted_variance / closed.weighted_variance,
    }
}

/// Runs both oracle blocks.
pub fn run_verification(settings: &VerifySettings) -> Result<VerifyReport> {
    let exhaustive = run_exhaustive(settings)?;
    let monte_carlo = run_monte_carlo(settings)?;
    let pass = exhaustive.pass && monte_carlo.pass;
    Ok(VerifyReport {
        settings: settings.clone(),
        exhaustive,
        monte_carlo,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(4).len(), 7);
        assert_eq!(compositions(8).len(), 127);
        assert!(compositions(5)
            .iter()
            .all(|c| c.iter().sum::<usize>() == 5 && c.len() >= 2));
        let mut all = compositions(6);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 31);
    }

    #[test]
    fn small_battery_passes() {
        let s = VerifySettings {
            exhaustive_graphs: 5,
            max_n: 6,
            mc_draws: 20_000,
            ..VerifySettings::default()
        };
        let r = run_verification(&s).unwrap();
        assert!(r.exhaustive.pass, "{:?}", r.exhaustive.failures.first());
        assert!(r.monte_carlo.pass, "sigma {}", r.monte_carlo.max_sigma);
        assert!(r.pass);
    }

    #[test]
    fn fault_is_detected() {
        let s = VerifySettings {
            exhaustive_graphs: 3,
            max_n: 6,
            mc_draws: 20_000,
            fault: Some(Fault::FlipPairTerm),
            ..VerifySettings::default()
        };
        let r = run_verification(&s).unwrap();
        assert!(!r.exhaustive.pass);
        assert!(r.exhaustive.exact_mismatches > 0);
        assert!(!r.monte_carlo.pass);
        assert!(!r.pass);
    }
}
