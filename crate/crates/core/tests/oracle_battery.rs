mod common;

use std::time::Instant;

use common::gaussian_points;
use graphclust::oracle::{exhaustive_moments, mc_moments, mc_standardized, OracleEstimate};
use graphclust::verify::{compositions, random_graph, run_exhaustive, VerifySettings};
use graphclust::{build_kmst, pairwise_distances, rng_for, Metric};
use rand::seq::IndexedRandom;
use rand::Rng;

#[test]
fn closed_form_matches_enumeration_on_fifty_graphs() {
    let start = Instant::now();
    let s = run_exhaustive(&VerifySettings::default()).unwrap();
    assert_eq!(s.graphs, 50);
    assert_eq!(s.exact_mismatches, 0, "{:?}", s.failures.first());
    assert!(s.max_rel_err <= 1e-12, "{}", s.max_rel_err);
    assert!(s.pass);
    assert!(start.elapsed().as_secs() < 60);
}

fn within(diff: f64, se: f64, gate: f64) -> bool {
    if se > 0.0 {
        diff.abs() <= gate * se
    } else {
        diff.abs() <= 1e-9
    }
}

fn mc_agrees(mc: &OracleEstimate<f64>, ex: &OracleEstimate<f64>) -> bool {
    let se = mc.stderr.as_ref().unwrap();
    let k = ex.expected.len();
    let mut ok = within(mc.weighted_mean - ex.weighted_mean, se.weighted_mean, 4.0)
        && within(
            mc.weighted_variance - ex.weighted_variance,
            se.weighted_variance,
            4.0,
        );
    for i in 0..k {
        ok &= within(mc.expected[i] - ex.expected[i], se.expected[i], 4.0);
        for j in 0..k {
            ok &= within(
                mc.covariance[i][j] - ex.covariance[i][j],
                se.covariance[i][j],
                4.0,
            );
        }
    }
    ok
}

#[test]
fn monte_carlo_tracks_enumeration() {
    let mut agree = 0;
    for case in 0..100u64 {
        let mut rng = rng_for(21, &[case]);
        let n = rng.random_range(5..=8);
        let g = random_graph(n, rng.random());
        let sizes = compositions(n).choose(&mut rng).unwrap().clone();
        let ex: OracleEstimate<f64> = exhaustive_moments(&g, &sizes).unwrap();
        let mc = mc_moments(&g, &sizes, 20_000, case).unwrap();
        if mc_agrees(&mc, &ex) {
            agree += 1;
        }
    }
    assert!(
        agree >= 99,
        "only {agree}/100 cases within 4 standard errors"
    );
}

#[test]
fn standardized_statistic_is_standard_under_the_null() {
    let x = gaussian_points(60, 5, 3);
    let g = build_kmst(&pairwise_distances(&x, Metric::Euclidean), 10).unwrap();
    let z = mc_standardized(&g, &[20, 20, 20], 100_000, 9).unwrap();
    assert!(z.mean.abs() <= 0.02, "mean {}", z.mean);
    assert!(
        (0.95..=1.05).contains(&z.variance),
        "variance {}",
        z.variance
    );
}

#[test]
fn monte_carlo_is_thread_count_independent() {
    let g = random_graph(8, 4);
    let run = |t| common::pool(t).install(|| mc_moments(&g, &[3, 3, 2], 5000, 1).unwrap());
    assert_eq!(run(1), run(4));
}
