#![allow(dead_code)]

use graphclust::graph::{graph_from_edges, EdgeRecord};
use graphclust::{rng_for, DataMatrix64, SimilarityGraph64};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_points(n: usize, d: usize, seed: u64) -> DataMatrix64 {
    let mut rng = rng_for(seed, &[]);
    let v = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    DataMatrix64::new(n, d, v).unwrap()
}

pub fn uniform_points(n: usize, d: usize, seed: u64) -> DataMatrix64 {
    let mut rng = rng_for(seed, &[]);
    let v = (0..n * d).map(|_| rng.random::<f64>()).collect();
    DataMatrix64::new(n, d, v).unwrap()
}

pub fn graph(n: usize, edges: &[(usize, usize)]) -> SimilarityGraph64 {
    let recs: Vec<_> = edges
        .iter()
        .enumerate()
        .map(|(i, &(u, v))| EdgeRecord::new(i + 1, u, v, None))
        .collect();
    graph_from_edges(n, &recs).unwrap()
}

/// The three-Gaussian planar setup: N(0, I), N((3,3), I), N((-3,-3), I),
/// 20 points each.
pub fn three_gaussians(seed: u64) -> DataMatrix64 {
    let mut rng = rng_for(seed, &[]);
    let mut v = Vec::with_capacity(120);
    for c in [0.0, 3.0, -3.0] {
        for _ in 0..40 {
            let z: f64 = rng.sample(StandardNormal);
            v.push(c + z);
        }
    }
    DataMatrix64::new(60, 2, v).unwrap()
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng_for(seed, &[]));
    p
}

pub fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}
