use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::scenario::{generate, ScenarioSpec};
use super::silhouette::silhouette_baseline;
use crate::cluster::{accuracy, KMeansConfig, KMeansLabeler};
use crate::data::{pairwise_distances, Metric};
use crate::edgecount::{estimate_k, ClusterLabels, Labeler, LabelerError, QProfile};
use crate::error::{Error, Result};
use crate::graph::build_kmst;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GraphBased,
    Silhouette,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::GraphBased => "graph-based",
            Method::Silhouette => "silhouette",
        }
    }

    /// Smallest `k` the method can select.
    pub fn min_k(self) -> usize {
        2
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "graph-based" | "graph" => Ok(Method::GraphBased),
            "silhouette" => Ok(Method::Silhouette),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSettings {
    pub methods: Vec<Method>,
    pub reps: usize,
    /// Largest `k` considered; candidates run from 1 (table column) or 2
    /// (selectable) up to here.
    pub kmax: usize,
    pub graph_k: usize,
    pub metric: Metric,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            methods: vec![Method::GraphBased, Method::Silhouette],
            reps: 100,
            kmax: 10,
            graph_k: 10,
            metric: Metric::Euclidean,
            restarts: 10,
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// How often a method selected each `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyTable {
    pub method: Method,
    /// `counts[k - 1]` for `k = 1..=kmax`.
    pub counts: Vec<usize>,
    pub replicates: usize,
    /// Replicates where the method could not select any `k`.
    pub failures: usize,
}

impl FrequencyTable {
    pub fn count(&self, k: usize) -> usize {
        self.counts.get(k.wrapping_sub(1)).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateDetail {
    pub rep: usize,
    pub seed: u64,
    pub graph_based: Option<usize>,
    pub silhouette: Option<usize>,
    /// `Q(k)` for `k = 2..=kmax` (`None` where invalid).
    pub q: Vec<Option<f64>>,
    /// Mean silhouette for `k = 2..=kmax`.
    pub silhouette_scores: Vec<f64>,
    /// k-means accuracy against the true labels for `k = 1..=kmax`.
    pub accuracy: Vec<f64>,
    /// Similarity graphs built for this replicate; always 1.
    pub graph_builds: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub scenario: ScenarioSpec,
    pub settings: SimulationSettings,
    pub tables: Vec<FrequencyTable>,
    /// Mean k-means accuracy for `k = 1..=kmax` over successful replicates.
    pub mean_accuracy: Vec<f64>,
    pub replicates: Vec<ReplicateDetail>,
}

impl SimulationReport {
    pub fn table(&self, method: Method) -> Option<&FrequencyTable> {
        self.tables.iter().find(|t| t.method == method)
    }

    /// `method,1,..,kmax,failures`; `-` marks `k` a method cannot select.
    pub fn frequency_csv(&self) -> String {
        let kmax = self.settings.kmax;
        let mut s = String::from("method");
        for k in 1..=kmax {
            let _ = write!(s, ",{k}");
        }
        s.push_str(",failures\n");
        for t in &self.tables {
            s.push_str(t.method.name());
            for k in 1..=kmax {
                if k < t.method.min_k() {
                    s.push_str(",-");
                } else {
                    let _ = write!(s, ",{}", t.count(k));
                }
            }
            let _ = writeln!(s, ",{}", t.failures);
        }
        s
    }

    /// `k,mean_accuracy` rows for plotting accuracy against `k`.
    pub fn accuracy_csv(&self) -> String {
        let mut s = String::from("k,mean_accuracy\n");
        for (i, a) in self.mean_accuracy.iter().enumerate() {
            let _ = writeln!(s, "{},{}", i + 1, a);
        }
        s
    }
}

struct Precomputed<'a>(&'a [ClusterLabels]);

impl Labeler for Precomputed<'_> {
    fn labels(&self, k: usize) -> std::result::Result<ClusterLabels, LabelerError> {
        self.0
            .get(k - 1)
            .cloned()
            .ok_or_else(|| LabelerError::Failed(format!("no labeling for k = {k}")))
    }
}

fn run_one(spec: &ScenarioSpec, settings: &SimulationSettings, rep: usize) -> ReplicateDetail {
    let seed = derive_seed(settings.seed, &[rep as u64]);
    let mut detail = ReplicateDetail {
        rep,
        seed,
        graph_based: None,
        silhouette: None,
        q: Vec::new(),
        silhouette_scores: Vec::new(),
        accuracy: Vec::new(),
        graph_builds: 0,
        error: None,
    };
    if let Err(e) = fill_replicate(spec, settings, seed, &mut detail) {
        detail.error = Some(e.to_string());
    }
    detail
}

fn fill_replicate(
    spec: &ScenarioSpec,
    settings: &SimulationSettings,
    seed: u64,
    detail: &mut ReplicateDetail,
) -> Result<()> {
    let (x, truth) = generate(&spec.with_seed(derive_seed(seed, &[0])))?;
    let kmax = settings.kmax;
    if kmax + 1 > x.nrows() || kmax < 2 {
        return Err(Error::InvalidRange {
            kmin: 2,
            kmax,
            n: x.nrows(),
        });
    }
    let template = KMeansConfig {
        k: 1,
        restarts: settings.restarts,
        max_iter: settings.max_iter,
        tol: settings.tol,
        seed: derive_seed(seed, &[1]),
    };
    let kmeans = KMeansLabeler::new(&x, template);
    let labelings: Vec<ClusterLabels> = (1..=kmax)
        .into_par_iter()
        .map(|k| kmeans.labels(k))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Simulation(e.to_string()))?;
    detail.accuracy = labelings
        .iter()
        .map(|l| accuracy(&truth, l).map(|r| r.accuracy))
        .collect::<Result<_>>()?;

    let dist = pairwise_distances(&x, settings.metric);
    if settings.methods.contains(&Method::GraphBased) {
        let graph = build_kmst(&dist, settings.graph_k)?;
        detail.graph_builds += 1;
        let profile: QProfile<f64> = estimate_k(&graph, &Precomputed(&labelings), 2, kmax)?;
        detail.q = profile.records.iter().map(|r| r.q).collect();
        detail.graph_based = profile.chosen_k;
    }
    if settings.methods.contains(&Method::Silhouette) {
        let sel = silhouette_baseline(&dist, &labelings)?;
        detail.silhouette_scores = sel.scores.iter().map(|&(_, s)| s).collect();
        detail.silhouette = sel.chosen_k;
    }
    Ok(())
}

/// Runs `settings.reps` independent replicates (in parallel, with per-replicate
/// derived seeds) and tallies each method's selected `k`. A failing
/// replicate is recorded in its detail and counted as a failure.
pub fn run_replicates(
    spec: &ScenarioSpec,
    settings: &SimulationSettings,
) -> Result<SimulationReport> {
    if settings.reps == 0 {
        return Err(Error::Simulation("reps must be at least 1".into()));
    }
    if settings.kmax < 2 || settings.graph_k == 0 {
        return Err(Error::Simulation(
            "kmax must be at least 2 and graph K at least 1".into(),
        ));
    }
    let replicates: Vec<ReplicateDetail> = (0..settings.reps)
        .into_par_iter()
        .map(|rep| run_one(spec, settings, rep))
        .collect();

    let tables = settings
        .methods
        .iter()
        .map(|&method| {
            let mut counts = vec![0; settings.kmax];
            let mut failures = 0;
            for r in &replicates {
                let chosen = match method {
                    Method::GraphBased => r.graph_based,
                    Method::Silhouette => r.silhouette,
                };
                match chosen {
                    Some(k) => counts[k - 1] += 1,
                    None => failures += 1,
                }
            }
            FrequencyTable {
                method,
                counts,
                replicates: settings.reps,
                failures,
            }
        })
        .collect();

    let ok: Vec<&ReplicateDetail> = replicates.iter().filter(|r| r.error.is_none()).collect();
    let mean_accuracy = (0..settings.kmax)
        .map(|i| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| r.accuracy[i]).sum::<f64>() / ok.len() as f64
            }
        })
        .collect();

    Ok(SimulationReport {
        scenario: spec.clone(),
        settings: settings.clone(),
        tables,
        mean_accuracy,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::{ScenarioConfig, ScenarioId};

    fn small_spec() -> ScenarioSpec {
        let mut spec = ScenarioConfig::builtin().spec(ScenarioId::I, 0).unwrap();
        spec.dim = 30;
        spec.sizes = vec![20, 20, 20];
        spec
    }

    fn small_settings(reps: usize) -> SimulationSettings {
        SimulationSettings {
            reps,
            kmax: 5,
            graph_k: 3,
            restarts: 3,
            seed: 5,
            ..SimulationSettings::default()
        }
    }

    #[test]
    fn single_replicate_sums_to_one() {
        let report = run_replicates(&small_spec(), &small_settings(1)).unwrap();
        for t in &report.tables {
            assert_eq!(t.counts.iter().sum::<usize>() + t.failures, 1);
        }
        assert_eq!(report.replicates[0].graph_builds, 1);
        assert_eq!(report.replicates[0].q.len(), 4);
        assert_eq!(report.mean_accuracy.len(), 5);
    }

    #[test]
    fn reproducible() {
        let a = run_replicates(&small_spec(), &small_settings(3)).unwrap();
        let b = run_replicates(&small_spec(), &small_settings(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frequency_csv(), b.frequency_csv());
    }

    #[test]
    fn csv_layout() {
        let r = run_replicates(&small_spec(), &small_settings(2)).unwrap();
        let csv = r.frequency_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "method,1,2,3,4,5,failures");
        assert!(lines.next().unwrap().starts_with("graph-based,-,"));
        assert!(lines.next().unwrap().starts_with("silhouette,-,"));
    }

    #[test]
    fn zero_reps_rejected() {
        assert!(run_replicates(&small_spec(), &small_settings(0)).is_err());
    }
}
