use std::fmt::Write as _;
use std::path::Path;

use graphclust::cluster::{labels_file_name, load_labels};
use graphclust::data::{read_data_csv, read_distance_csv};
use graphclust::graph::{graph_from_edges, parse_edge_list, write_edge_list};
use graphclust::simlab::{run_replicates, ScenarioConfig, ScenarioId, SimulationSettings};
use graphclust::verify::{run_verification, Fault, VerifySettings};
use graphclust::{
    build_kmst, build_knn, estimate_k, pairwise_distances, DataMatrix64, DirLabeler,
    DistanceMatrix64, Error, KMeansConfig, KMeansLabeler, Labeler, QProfile64, SimilarityGraph64,
};
use serde::Serialize;

use crate::output::{to_json_pretty, with_comments, write_atomic, Meta};
use crate::{
    ClustererKind, EstimateArgs, Failure, FaultArg, Format, GraphArgs, GraphInput, GraphKind,
    SimulateArgs, VerifyArgs,
};

fn require_exists(path: &Path, flag: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Input(format!(
            "{flag} {}: no such file or directory",
            path.display()
        )))
    }
}

/// Observations as loaded from --input.
enum Observations {
    None,
    Data(DataMatrix64),
    Distances(DistanceMatrix64),
}

impl Observations {
    fn load(g: &GraphInput) -> Result<Self, Failure> {
        let Some(path) = &g.input else {
            return Ok(Observations::None);
        };
        require_exists(path, "--input")?;
        Ok(if g.distances {
            Observations::Distances(read_distance_csv(path)?)
        } else {
            Observations::Data(read_data_csv(path)?)
        })
    }

    fn n(&self) -> Option<usize> {
        match self {
            Observations::None => None,
            Observations::Data(x) => Some(x.nrows()),
            Observations::Distances(d) => Some(d.len()),
        }
    }

    fn distances(&self, g: &GraphInput) -> Result<DistanceMatrix64, Failure> {
        match self {
            Observations::Data(x) => Ok(pairwise_distances(x, g.metric)),
            Observations::Distances(d) => Ok(d.clone()),
            Observations::None => Err(Failure::Input(format!(
                "--graph {} needs --input",
                match g.graph {
                    GraphKind::Kmst => "kmst",
                    GraphKind::Knn => "knn",
                    GraphKind::External => "external",
                }
            ))),
        }
    }
}

fn check_graph_args(g: &GraphInput) -> Result<(), Failure> {
    if g.graph_k == 0 {
        return Err(Error::ZeroGraphK.into());
    }
    match (g.graph, &g.edges) {
        (GraphKind::External, None) => Err(Failure::Input("--graph external needs --edges".into())),
        (GraphKind::External, Some(p)) => require_exists(p, "--edges"),
        (_, Some(_)) => Err(Failure::Input(
            "--edges is only used with --graph external".into(),
        )),
        _ => Ok(()),
    }
}

fn build_graph(g: &GraphInput, obs: &Observations, n: usize) -> Result<SimilarityGraph64, Failure> {
    Ok(match g.graph {
        GraphKind::Kmst => build_kmst(&obs.distances(g)?, g.graph_k)?,
        GraphKind::Knn => build_knn(&obs.distances(g)?, g.graph_k)?,
        GraphKind::External => {
            let path = g.edges.as_ref().expect("checked by check_graph_args");
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            let records = parse_edge_list::<f64>(&text)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            graph_from_edges(n, &records)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
    })
}

/// Number of observations when no data matrix is given: the length of the
/// first label file present in the k range.
fn n_from_labels(dir: &Path, kmin: usize, kmax: usize) -> Result<usize, Failure> {
    for k in kmin..=kmax {
        let path = dir.join(labels_file_name(k));
        if path.exists() {
            return Ok(load_labels(&path)?.n());
        }
    }
    Err(Failure::Input(format!(
        "no --input and no label files {}..{} in {}",
        labels_file_name(kmin),
        labels_file_name(kmax),
        dir.display()
    )))
}

#[derive(Serialize)]
struct GraphSummary {
    n: usize,
    edges: usize,
}

#[derive(Serialize)]
struct EstimateArtifact<'a> {
    #[serde(flatten)]
    meta: Meta<'a, EstimateArgs>,
    graph: GraphSummary,
    profile: &'a QProfile64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn profile_table(p: &QProfile64) -> String {
    let mut s = String::new();
    match p.chosen_k {
        Some(k) => {
            let _ = writeln!(s, "chosen_k: {k}");
        }
        None => s.push_str("chosen_k: none\n"),
    }
    s.push_str("k\tW\tE\tVar\tQ\tZ\tvalid\n");
    for r in &p.records {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.k,
            fmt_opt(r.w),
            fmt_opt(r.e),
            fmt_opt(r.var),
            fmt_opt(r.q),
            fmt_opt(r.z),
            match r.reason {
                None => "yes".to_string(),
                Some(reason) => format!("no ({reason})"),
            }
        );
    }
    s
}

pub fn estimate(a: &EstimateArgs) -> Result<(), Failure> {
    if a.kmin < 2 {
        return Err(Failure::Input(
            "--kmin must be at least 2; Q(1) is undefined".into(),
        ));
    }
    if a.kmin > a.kmax {
        return Err(Failure::Input(format!(
            "--kmin {} exceeds --kmax {}",
            a.kmin, a.kmax
        )));
    }
    check_graph_args(&a.graph)?;
    if let Some(dir) = &a.labels_dir {
        require_exists(dir, "--labels-dir")?;
    }
    let labels_dir = match (a.clusterer, &a.labels_dir) {
        (ClustererKind::LabelsDir, None) => {
            return Err(Failure::Input(
                "--clusterer labels-dir needs --labels-dir".into(),
            ))
        }
        (ClustererKind::LabelsDir, Some(d)) => Some(d.as_path()),
        (ClustererKind::Kmeans, _) => None,
    };

    let obs = Observations::load(&a.graph)?;
    let n = match (obs.n(), labels_dir) {
        (Some(n), _) => n,
        (None, Some(dir)) => n_from_labels(dir, a.kmin, a.kmax)?,
        (None, None) => return Err(Failure::Input("k-means needs --input data".into())),
    };
    if n < 4 {
        return Err(Error::DegenerateMoments { n }.into());
    }
    if a.kmax > n - 1 {
        return Err(Error::InvalidRange {
            kmin: a.kmin,
            kmax: a.kmax,
            n,
        }
        .into());
    }

    let graph = build_graph(&a.graph, &obs, n)?;
    let kmeans_labeler;
    let dir_labeler;
    let labeler: &dyn Labeler = match (labels_dir, &obs) {
        (Some(dir), _) => {
            dir_labeler = DirLabeler::new(dir, n);
            &dir_labeler
        }
        (None, Observations::Data(x)) => {
            let template = KMeansConfig {
                restarts: a.restarts,
                ..KMeansConfig::new(1, a.seed)
            };
            kmeans_labeler = KMeansLabeler::new(x, template);
            &kmeans_labeler
        }
        (None, _) => {
            return Err(Failure::Input(
                "k-means needs observations; use --clusterer labels-dir with a distance matrix"
                    .into(),
            ))
        }
    };

    let profile: QProfile64 = estimate_k(&graph, labeler, a.kmin, a.kmax)?;
    print!("{}", profile_table(&profile));

    if let Some(out) = &a.out {
        let meta = Meta::new("estimate", a);
        let body = match a.format {
            Format::Json => to_json_pretty(&EstimateArtifact {
                meta,
                graph: GraphSummary {
                    n: graph.n(),
                    edges: graph.edge_count(),
                },
                profile: &profile,
            }),
            Format::Csv => {
                let mut lines = meta.comment_lines();
                lines.push(format!(
                    "graph: n = {}, edges = {}",
                    graph.n(),
                    graph.edge_count()
                ));
                lines.push(format!(
                    "chosen_k: {}",
                    profile
                        .chosen_k
                        .map_or("none".to_string(), |k| k.to_string())
                ));
                with_comments(&lines, &profile.to_csv())
            }
        };
        write_atomic(out, &body)?;
    }
    match profile.failure_summary() {
        Some(summary) => Err(Failure::NoValidK(summary)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct SimulateArtifact<'a> {
    #[serde(flatten)]
    meta: Meta<'a, SimulateArgs>,
    #[serde(flatten)]
    report: &'a graphclust::simlab::SimulationReport,
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let id: ScenarioId = a.scenario.parse()?;
    let config = match &a.config {
        Some(path) => {
            require_exists(path, "--config")?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            ScenarioConfig::from_toml(&text)?
        }
        None => ScenarioConfig::builtin(),
    };
    let mut spec = config.spec(id, a.seed)?;
    if let Some(dim) = a.dim {
        spec.dim = dim;
        spec.validate()?;
    }
    let settings = SimulationSettings {
        reps: a.reps,
        kmax: a.kmax,
        graph_k: a.graph_k,
        metric: a.metric,
        restarts: a.restarts,
        seed: a.seed,
        ..SimulationSettings::default()
    };
    let report = run_replicates(&spec, &settings)?;
    let frequency = report.frequency_csv();
    print!("{frequency}");

    if let Some(dir) = &a.out {
        let meta = Meta::new("simulate", a);
        let lines = meta.comment_lines();
        write_atomic(
            &dir.join("frequency.csv"),
            &with_comments(&lines, &frequency),
        )?;
        write_atomic(
            &dir.join("accuracy.csv"),
            &with_comments(&lines, &report.accuracy_csv()),
        )?;
        write_atomic(
            &dir.join("run.json"),
            &to_json_pretty(&SimulateArtifact {
                meta,
                report: &report,
            }),
        )?;
    }
    let failed = report
        .replicates
        .iter()
        .filter(|r| r.error.is_some())
        .count();
    if failed > 0 {
        eprintln!(
            "warning: {failed} of {} replicates failed",
            report.replicates.len()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyArtifact<'a> {
    #[serde(flatten)]
    meta: Meta<'a, VerifyArgs>,
    #[serde(flatten)]
    report: &'a graphclust::verify::VerifyReport,
}

pub fn verify(a: &VerifyArgs) -> Result<(), Failure> {
    let settings = VerifySettings {
        seed: a.seed,
        exhaustive_graphs: a.graphs,
        mc_draws: a.mc_draws,
        fault: a
            .inject_fault
            .map(|FaultArg::FlipPairTerm| Fault::FlipPairTerm),
        ..VerifySettings::default()
    };
    let report = run_verification(&settings)?;
    let ex = &report.exhaustive;
    let mc = &report.monte_carlo;
    println!(
        "exhaustive: {} graphs, {} cases, exact mismatches {}, max_rel_err {:e} -> {}",
        ex.graphs,
        ex.cases,
        ex.exact_mismatches,
        ex.max_rel_err,
        if ex.pass { "pass" } else { "FAIL" }
    );
    println!(
        "monte-carlo: n = {}, edges = {}, draws = {}, max deviation {:.3} se, Z mean {:.4} (gate {:.4}), Z var {:.4} (gate 1 +/- {:.4}) -> {}",
        mc.n,
        mc.edges,
        mc.draws,
        mc.max_sigma,
        mc.z.mean,
        mc.z_mean_gate,
        mc.z.variance,
        mc.z_variance_gate,
        if mc.pass { "pass" } else { "FAIL" }
    );
    if let Some(out) = &a.out {
        write_atomic(
            out,
            &to_json_pretty(&VerifyArtifact {
                meta: Meta::new("verify", a),
                report: &report,
            }),
        )?;
    }
    if report.pass {
        println!("verify: pass");
        return Ok(());
    }
    let mut msg = String::from("verification failed");
    for c in &ex.failures {
        let _ = write!(
            msg,
            "\n  exhaustive graph {} (n = {}, edges = {}) sizes {:?}: exact = {}, rel err {:e}",
            c.graph, c.n, c.edges, c.sizes, c.exact, c.max_rel_err
        );
    }
    if ex.exact_mismatches > ex.failures.len() {
        let _ = write!(
            msg,
            "\n  ... {} more exhaustive cases",
            ex.exact_mismatches - ex.failures.len()
        );
    }
    if !mc.pass {
        let _ = write!(
            msg,
            "\n  monte-carlo: max deviation {:.3} se, Z mean {:.4}, Z var {:.4}",
            mc.max_sigma, mc.z.mean, mc.z.variance
        );
    }
    Err(Failure::Verification(msg))
}

pub fn graph(a: &GraphArgs) -> Result<(), Failure> {
    check_graph_args(&a.graph)?;
    if a.graph.graph == GraphKind::External {
        return Err(Failure::Input(
            "graph builds kmst or knn graphs; --graph external is for estimate".into(),
        ));
    }
    let obs = Observations::load(&a.graph)?;
    let n = obs
        .n()
        .ok_or_else(|| Failure::Input("graph needs --input".into()))?;
    let g = build_graph(&a.graph, &obs, n)?;
    let mut header = Meta::new("graph", a).comment_lines();
    header.push(format!("n = {}, edges = {}", g.n(), g.edge_count()));
    let text = write_edge_list(&g, &header);
    match &a.out {
        Some(out) => write_atomic(out, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}
