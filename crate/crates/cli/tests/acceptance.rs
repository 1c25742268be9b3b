//! Acceptance criteria. Runs without the libtest harness so that each
//! criterion prints exactly one PASS/FAIL line; the process exits non-zero if
//! any criterion fails. An optional argument filters criteria by name.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use graphclust::edgecount::null_moments;
use graphclust::graph::{graph_from_edges, kmst_trees, EdgeRecord};
use graphclust::oracle::mc_standardized;
use graphclust::simlab::{
    run_replicates, Method, ScenarioConfig, ScenarioId, SimulationReport, SimulationSettings,
};
use graphclust::verify::{gaussian_cloud, run_exhaustive, VerifySettings};
use graphclust::{
    accuracy, build_kmst, derive_seed, estimate_k, graph_stats, pairwise_distances, BigRational,
    ClusterLabels, DataMatrix64, KMeansConfig, KMeansLabeler, Metric, QProfile64,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    o.detail
        .push_str(&format!("; {:.1}s", elapsed.as_secs_f64()));
    if let Some(limit) = limit {
        if elapsed > limit {
            o.pass = false;
            o.detail.push_str(&format!(" exceeds {}s", limit.as_secs()));
        }
    }
    o
}

fn rat(a: i64, b: i64) -> BigRational {
    BigRational::new(a.into(), b.into())
}

fn small_graph(n: usize, edges: &[(usize, usize)]) -> graphclust::SimilarityGraph64 {
    let recs: Vec<_> = edges
        .iter()
        .enumerate()
        .map(|(i, &(u, v))| EdgeRecord::new(i + 1, u, v, None))
        .collect();
    graph_from_edges(n, &recs).unwrap()
}

fn criterion_1() -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let s = run_exhaustive(&VerifySettings::default()).expect("battery runs");
        let star = small_graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let path = small_graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let star_m = null_moments(&graph_stats::<BigRational, _>(&star), &[2, 2]).unwrap();
        let path_m = null_moments(&graph_stats::<BigRational, _>(&path), &[2, 2]).unwrap();
        let anchors = star_m.expected[0] == rat(1, 2)
            && star_m.variance[0] == rat(1, 4)
            && star_m.covariance[0][1] == rat(-1, 4)
            && path_m.weighted_variance == rat(1, 6);
        Outcome::new(
            s.pass && s.exact_mismatches == 0 && s.max_rel_err <= 1e-12 && anchors,
            format!(
                "{} graphs, {} size compositions, exact mismatches {}, max rel err {:e}, anchors {}",
                s.graphs,
                s.cases,
                s.exact_mismatches,
                s.max_rel_err,
                if anchors { "ok" } else { "wrong" }
            ),
        )
    })
}

fn criterion_2() -> Outcome {
    timed(Some(Duration::from_secs(120)), || {
        let x = gaussian_cloud(60, 5, 2024);
        let g = build_kmst(&pairwise_distances(&x, Metric::Euclidean), 10).unwrap();
        let z = mc_standardized(&g, &[20, 20, 20], 100_000, 2025).unwrap();
        Outcome::new(
            z.mean.abs() <= 0.02 && (0.95..=1.05).contains(&z.variance),
            format!(
                "|G| = {}, 1e5 permutations: Z mean {:.4}, Z variance {:.4}",
                g.edge_count(),
                z.mean,
                z.variance
            ),
        )
    })
}

/// N(0, I), N((3,3), I), N((-3,-3), I) in the plane, 20 points each.
fn three_gaussians(seed: u64) -> DataMatrix64 {
    let z = gaussian_cloud(60, 2, seed);
    let mut v = z.as_slice().to_vec();
    for (i, x) in v.iter_mut().enumerate() {
        *x += [0.0, 3.0, -3.0][i / 40];
    }
    DataMatrix64::new(60, 2, v).unwrap()
}

fn three_gaussian_hits(graph_k: usize) -> (usize, Vec<usize>) {
    let mut hits = 0;
    let mut tally = vec![0; 11];
    for rep in 0..100u64 {
        let seed = derive_seed(3, &[rep]);
        let x = three_gaussians(seed);
        let g = build_kmst(&pairwise_distances(&x, Metric::Euclidean), graph_k).unwrap();
        let labeler = KMeansLabeler::new(&x, KMeansConfig::new(1, seed));
        let p: QProfile64 = estimate_k(&g, &labeler, 2, 10).unwrap();
        if let Some(k) = p.chosen_k {
            tally[k] += 1;
            if k == 3 {
                hits += 1;
            }
        }
    }
    (hits, tally)
}

fn tally_text(tally: &[usize]) -> String {
    tally
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(k, c)| format!("k={k}:{c}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_3() -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let (hits, tally) = three_gaussian_hits(1);
        Outcome::new(
            hits >= 95,
            format!(
                "1-MST + k-means, k in 2..10: k=3 in {hits}/100 (need 95); selections {}",
                tally_text(&tally)
            ),
        )
    })
}

fn scenario_reports() -> Vec<SimulationReport> {
    let config = ScenarioConfig::builtin();
    [
        ScenarioId::I,
        ScenarioId::II,
        ScenarioId::III,
        ScenarioId::IV,
        ScenarioId::V,
    ]
    .iter()
    .map(|&id| {
        let spec = config.spec(id, 0).unwrap();
        let settings = SimulationSettings {
            methods: vec![Method::GraphBased],
            seed: 400 + id as u64,
            ..SimulationSettings::default()
        };
        run_replicates(&spec, &settings).unwrap()
    })
    .collect()
}

fn criterion_4(reports: &[SimulationReport]) -> Outcome {
    let mut pass = true;
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            let k = r.scenario.true_k();
            let t = r.table(Method::GraphBased).unwrap();
            let hits = t.count(k);
            pass &= hits >= 90;
            format!("{} k={k}: {hits}/100", r.scenario.id)
        })
        .collect();
    Outcome::new(pass, format!("d = 400, 10-MST: {}", parts.join(", ")))
}

/// Accuracy by enumerating every relabeling of the estimate.
fn brute_force_accuracy(truth: &[usize], est: &[usize], k: usize) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    perms(k)
        .iter()
        .map(|p| truth.iter().zip(est).filter(|&(&t, &e)| p[e] == t).count())
        .max()
        .unwrap() as f64
        / truth.len() as f64
}

fn accuracy_matches_brute_force() -> bool {
    let mut ok = true;
    for case in 0..100u64 {
        let k = 1 + (derive_seed(5, &[case]) % 6) as usize;
        let n = 30;
        let draw = |stream: u64| -> Vec<usize> {
            (0..n)
                .map(|i| {
                    if i < k {
                        i
                    } else {
                        (derive_seed(case, &[stream, i as u64]) % k as u64) as usize
                    }
                })
                .collect()
        };
        let (t, e) = (draw(0), draw(1));
        let fast = accuracy(
            &ClusterLabels::new(t.clone(), k).unwrap(),
            &ClusterLabels::new(e.clone(), k).unwrap(),
        )
        .unwrap()
        .accuracy;
        ok &= (fast - brute_force_accuracy(&t, &e, k)).abs() < 1e-12;
    }
    ok
}

fn criterion_5(reports: &[SimulationReport]) -> Outcome {
    let brute = accuracy_matches_brute_force();
    let mut pass = brute;
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            let k = r.scenario.true_k();
            let a = r.mean_accuracy[k - 1];
            pass &= a > 0.95;
            format!("{} {:.4}", r.scenario.id, a)
        })
        .collect();
    Outcome::new(
        pass,
        format!(
            "mean k-means accuracy at true k: {}; assignment vs brute force (k <= 6, 100 pairs) {}",
            parts.join(", "),
            if brute { "agree" } else { "DISAGREE" }
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut pass = true;
    let mut checked = 0;
    let mut ratio_200 = Vec::new();
    for &n in &[10usize, 50, 200] {
        for rep in 0..5u64 {
            let x = gaussian_cloud(n, 3, derive_seed(6, &[n as u64, rep]));
            let d = pairwise_distances(&x, Metric::Euclidean);
            for k in [1usize, 2, 3, 5, 10] {
                let Ok(trees) = kmst_trees(&d, k) else {
                    continue;
                };
                checked += 1;
                let mut seen = BTreeSet::new();
                for t in &trees {
                    let mut parent: Vec<usize> = (0..n).collect();
                    fn root(p: &mut [usize], mut x: usize) -> usize {
                        while p[x] != x {
                            p[x] = p[p[x]];
                            x = p[x];
                        }
                        x
                    }
                    let mut merged = 0;
                    for e in t {
                        pass &= seen.insert((e.u, e.v));
                        let (a, b) = (root(&mut parent, e.u), root(&mut parent, e.v));
                        if a != b {
                            parent[a] = b;
                            merged += 1;
                        }
                    }
                    pass &= merged == n - 1 && t.len() == n - 1;
                }
                pass &= seen.len() == k * (n - 1);
                if n == 200 && rep == 0 {
                    let r = seen.len() as f64 / n as f64;
                    pass &= (r - k as f64).abs() <= 0.05 * k as f64;
                    ratio_200.push(format!("K={k}: {r:.3}"));
                }
            }
        }
    }
    Outcome::new(
        pass && checked > 0,
        format!(
            "{checked} feasible (n, K) cases edge-disjoint spanning with K(n-1) edges; |G|/n at n = 200: {}",
            ratio_200.join(", ")
        ),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_graphclust")
}

fn run_cli(args: &[&str], threads: &str) -> bool {
    Command::new(bin())
        .args(args)
        .env("GRAPHCLUST_THREADS", threads)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn read_all(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names
        .iter()
        .map(|n| std::fs::read(dir.join(n)).unwrap_or_default())
        .collect()
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.csv");
    let x = three_gaussians(77);
    let mut csv = String::from("x,y\n");
    for row in x.rows() {
        csv.push_str(&format!("{},{}\n", row[0], row[1]));
    }
    std::fs::write(&data, csv).unwrap();
    let data = data.to_str().unwrap();

    let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
    let mut all_ran = true;
    for (i, threads) in ["1", "4", "1", "4"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        std::fs::create_dir_all(&dir).unwrap();
        let d = dir.to_str().unwrap();
        let est_json = format!("{d}/profile.json");
        let est_csv = format!("{d}/profile.csv");
        all_ran &= run_cli(
            &[
                "estimate", "--input", data, "--seed", "5", "--out", &est_json,
            ],
            threads,
        );
        all_ran &= run_cli(
            &[
                "estimate", "--input", data, "--seed", "5", "--format", "csv", "--out", &est_csv,
            ],
            threads,
        );
        all_ran &= run_cli(
            &[
                "simulate",
                "--scenario",
                "IV",
                "--reps",
                "8",
                "--dim",
                "60",
                "--seed",
                "9",
                "--out",
                d,
            ],
            threads,
        );
        outputs.push(read_all(
            &dir,
            &[
                "profile.json",
                "profile.csv",
                "frequency.csv",
                "accuracy.csv",
                "run.json",
            ],
        ));
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    let nonempty = outputs[0].iter().all(|f| !f.is_empty());
    Outcome::new(
        all_ran && identical && nonempty,
        format!(
            "estimate (json, csv) and simulate artifacts over 4 runs at 1 and 4 threads: {}",
            if !all_ran {
                "a run failed"
            } else if identical && nonempty {
                "byte-identical"
            } else {
                "DIFFER"
            }
        ),
    )
}

fn report(id: &str, name: &str, o: &Outcome) {
    println!(
        "criterion {id} [{}] {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wanted = |id: &str| filter.as_deref().is_none_or(|f| id.contains(f));
    let mut failed = Vec::new();
    let mut check = |id: &'static str, name: &str, o: Outcome| {
        report(id, name, &o);
        if !o.pass {
            failed.push(id);
        }
    };

    if wanted("1") {
        check(
            "1",
            "closed-form moments equal exhaustive enumeration",
            criterion_1(),
        );
    }
    if wanted("2") {
        check("2", "Monte Carlo standardization", criterion_2());
    }
    if wanted("3") {
        check("3", "three planar Gaussians, 1-MST", criterion_3());
        let info = timed(None, || {
            let (hits, tally) = three_gaussian_hits(10);
            Outcome::new(
                true,
                format!(
                    "10-MST: k=3 in {hits}/100; selections {}",
                    tally_text(&tally)
                ),
            )
        });
        println!("  info: same setup with 10-MST: {}", info.detail);
    }
    if wanted("4") || wanted("5") {
        let start = Instant::now();
        let reports = scenario_reports();
        let elapsed = start.elapsed();
        let mut c4 = criterion_4(&reports);
        c4.detail.push_str(&format!(
            "; {:.1}s for scenarios I-V",
            elapsed.as_secs_f64()
        ));
        if elapsed > Duration::from_secs(30 * 60) {
            c4.pass = false;
            c4.detail.push_str(" exceeds 1800s");
        }
        if wanted("4") {
            check("4", "graph-based selection in scenarios I-V", c4);
        }
        if wanted("5") {
            check("5", "k-means accuracy at the true k", criterion_5(&reports));
        }
    }
    if wanted("6") {
        check("6", "K-MST structure", timed(None, criterion_6));
    }
    if wanted("7") {
        check(
            "7",
            "determinism across runs and thread counts",
            timed(None, criterion_7),
        );
    }

    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
