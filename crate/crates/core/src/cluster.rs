//! Default clustering backend (k-means with k-means++ seeding), label-file
//! intake, and permutation-maximized clustering accuracy.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{sq_dist, DataMatrix};
use crate::edgecount::{ClusterLabels, Labeler, LabelerError};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Convergence threshold on the total squared center shift, relative to
    /// the mean per-feature variance of the data.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 10,
            max_iter: 100,
            tol: 1e-6,
            seed,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::InvalidClusterCount { k: self.k, n });
        }
        if self.restarts == 0 || self.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "restarts and max_iter must be at least 1".into(),
            ));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit<T> {
    pub labels: ClusterLabels,
    pub centers: Vec<Vec<T>>,
    pub wcss: T,
    pub iterations: usize,
    /// Within-cluster sum of squares after each center update.
    pub history: Vec<T>,
    /// Index of the restart that produced this fit.
    pub restart: usize,
}

/// Best of `cfg.restarts` Lloyd runs by within-cluster sum of squares.
/// Restarts use independent derived seeds; ties go to the lower restart index.
pub fn kmeans<T: Real>(x: &DataMatrix<T>, cfg: &KMeansConfig) -> Result<KMeansFit<T>> {
    cfg.validate(x.nrows())?;
    let scale = mean_feature_variance(x);
    let fits: Vec<KMeansFit<T>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(cfg.seed, &[r as u64]);
            let mut fit = lloyd(x, cfg, scale, &mut rng);
            fit.restart = r;
            fit
        })
        .collect();
    let mut best: Option<KMeansFit<T>> = None;
    for fit in fits {
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn mean_feature_variance<T: Real>(x: &DataMatrix<T>) -> T {
    let n = T::from_count(x.nrows());
    let d = x.ncols();
    let mut total = T::zero();
    for f in 0..d {
        let mean = x.rows().map(|r| r[f]).sum::<T>() / n;
        total = total + x.rows().map(|r| (r[f] - mean) * (r[f] - mean)).sum::<T>() / n;
    }
    total / T::from_count(d)
}

fn plus_plus_init<T: Real>(x: &DataMatrix<T>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = x.nrows();
    let first = rng.random_range(0..n);
    let mut centers = vec![x.row(first).to_vec()];
    let mut nearest: Vec<T> = x.rows().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: T = nearest.iter().copied().sum();
        let pick = if total > T::zero() {
            let target = T::from_f64(rng.random::<f64>()).unwrap() * total;
            let mut acc = T::zero();
            let mut chosen = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w > T::zero() {
                    acc = acc + w;
                    chosen = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            chosen.expect("positive total weight")
        } else {
            rng.random_range(0..n)
        };
        let c = x.row(pick).to_vec();
        for (i, r) in x.rows().enumerate() {
            let d = sq_dist(r, &c);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
        centers.push(c);
    }
    centers
}

fn nearest_center<T: Real>(row: &[T], centers: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, sq_dist(row, &centers[0]));
    for (j, c) in centers.iter().enumerate().skip(1) {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd<T: Real>(
    x: &DataMatrix<T>,
    cfg: &KMeansConfig,
    scale: T,
    rng: &mut ChaCha8Rng,
) -> KMeansFit<T> {
    let (n, d, k) = (x.nrows(), x.ncols(), cfg.k);
    let threshold =
        T::from_f64(cfg.tol).unwrap() * if scale > T::zero() { scale } else { T::one() };
    let mut centers = plus_plus_init(x, k, rng);
    let mut assign = vec![0usize; n];
    let mut cost = vec![T::zero(); n];
    let mut history = Vec::new();
    let mut iterations = 0;

    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let mut changed = it == 0;
        for (i, r) in x.rows().enumerate() {
            let (j, dist) = nearest_center(r, &centers);
            if assign[i] != j {
                changed = true;
            }
            assign[i] = j;
            cost[i] = dist;
        }
        changed |= repair_empty(&mut assign, &mut cost, k);

        let mut sums = vec![vec![T::zero(); d]; k];
        let mut counts = vec![0usize; k];
        for (i, r) in x.rows().enumerate() {
            counts[assign[i]] += 1;
            for (s, &v) in sums[assign[i]].iter_mut().zip(r) {
                *s = *s + v;
            }
        }
        let mut shift = T::zero();
        for j in 0..k {
            let m = T::from_count(counts[j]);
            let new: Vec<T> = sums[j].iter().map(|&s| s / m).collect();
            shift = shift + sq_dist(&new, &centers[j]);
            centers[j] = new;
        }
        let wcss: T = x
            .rows()
            .enumerate()
            .map(|(i, r)| sq_dist(r, &centers[assign[i]]))
            .sum();
        history.push(wcss);
        if !changed || shift <= threshold {
            break;
        }
    }

    let wcss = *history.last().expect("at least one iteration");
    KMeansFit {
        labels: ClusterLabels::new(assign, k).expect("empty clusters repaired"),
        centers,
        wcss,
        iterations,
        history,
        restart: 0,
    }
}

/// Moves the point farthest from its center into each empty cluster. Only
/// points from clusters with more than one member are eligible, so no new
/// cluster empties.
fn repair_empty<T: Real>(assign: &mut [usize], cost: &mut [T], k: usize) -> bool {
    let mut counts = vec![0usize; k];
    for &a in assign.iter() {
        counts[a] += 1;
    }
    let mut repaired = false;
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let far = (0..assign.len())
            .filter(|&i| counts[assign[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if cost[b] >= cost[i] => Some(b),
                _ => Some(i),
            })
            .expect("n >= k leaves a cluster with spare points");
        counts[assign[far]] -= 1;
        counts[j] = 1;
        assign[far] = j;
        cost[far] = T::zero();
        repaired = true;
    }
    repaired
}

/// k-means as a per-`k` labeler; each `k` gets its own derived seed so that
/// evaluation order does not matter.
pub struct KMeansLabeler<'a, T> {
    data: &'a DataMatrix<T>,
    template: KMeansConfig,
}

impl<'a, T: Real> KMeansLabeler<'a, T> {
    pub fn new(data: &'a DataMatrix<T>, template: KMeansConfig) -> Self {
        Self { data, template }
    }

    pub fn config_for(&self, k: usize) -> KMeansConfig {
        KMeansConfig {
            k,
            seed: derive_seed(self.template.seed, &[k as u64]),
            ..self.template.clone()
        }
    }
}

impl<T: Real> Labeler for KMeansLabeler<'_, T> {
    fn labels(&self, k: usize) -> std::result::Result<ClusterLabels, LabelerError> {
        kmeans(self.data, &self.config_for(k))
            .map(|f| f.labels)
            .map_err(|e| LabelerError::Failed(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub accuracy: f64,
    /// `matching[e]` is the true cluster matched to estimated cluster `e`
    /// (`None` when the estimate has more clusters than the truth).
    pub matching: Vec<Option<usize>>,
}

pub const MAX_ACCURACY_CLUSTERS: usize = 64;

/// `max over bijections a of (1/n) sum_i I(a(est_i) = true_i)`, solved as a
/// maximum-weight assignment on the agreement matrix.
pub fn accuracy(truth: &ClusterLabels, est: &ClusterLabels) -> Result<AccuracyReport> {
    if truth.n() != est.n() {
        return Err(Error::LengthMismatch {
            expected: truth.n(),
            found: est.n(),
        });
    }
    for k in [truth.k(), est.k()] {
        if k > MAX_ACCURACY_CLUSTERS {
            return Err(Error::TooManyClusters {
                max: MAX_ACCURACY_CLUSTERS,
                found: k,
            });
        }
    }
    let m = truth.k().max(est.k());
    let mut agree = vec![vec![0i64; m]; m];
    for (&t, &e) in truth.assignments().iter().zip(est.assignments()) {
        agree[e][t] += 1;
    }
    let top = agree.iter().flatten().copied().max().unwrap_or(0);
    let cost: Vec<Vec<i64>> = agree
        .iter()
        .map(|r| r.iter().map(|&a| top - a).collect())
        .collect();
    let cols = min_cost_assignment(&cost);
    let hits: i64 = cols.iter().enumerate().map(|(e, &t)| agree[e][t]).sum();
    let matching = (0..est.k())
        .map(|e| (cols[e] < truth.k()).then_some(cols[e]))
        .collect();
    Ok(AccuracyReport {
        accuracy: hits as f64 / truth.n() as f64,
        matching,
    })
}

/// Hungarian algorithm with potentials for a square cost matrix; returns the
/// column assigned to each row.
fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = i64::MAX / 4;
    // 1-based working arrays; index 0 is a sentinel column.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// One integer per line; ids are compacted in order of first appearance.
pub fn parse_labels(text: &str) -> Result<ClusterLabels> {
    let mut ids = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let s = raw.trim();
        let id: i64 = s.parse().map_err(|_| Error::Record {
            line: idx + 1,
            msg: format!("invalid label '{s}'"),
        })?;
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::Record {
            line: 1,
            msg: "empty label file".into(),
        });
    }
    ClusterLabels::from_ids(&ids)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<ClusterLabels> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

/// Conventional file name for the labeling with `k` clusters.
pub fn labels_file_name(k: usize) -> String {
    format!("labels_k{k}.txt")
}

/// Reads `labels_k{K}.txt` from a directory for each requested `k`.
pub struct DirLabeler {
    dir: std::path::PathBuf,
    n: usize,
}

impl DirLabeler {
    pub fn new(dir: impl Into<std::path::PathBuf>, n: usize) -> Self {
        Self { dir: dir.into(), n }
    }
}

impl Labeler for DirLabeler {
    fn labels(&self, k: usize) -> std::result::Result<ClusterLabels, LabelerError> {
        let labels = load_labels(self.dir.join(labels_file_name(k)))
            .map_err(|e| LabelerError::Failed(e.to_string()))?;
        if labels.n() != self.n {
            return Err(LabelerError::Failed(format!(
                "{} has {} labels, expected {}",
                labels_file_name(k),
                labels.n(),
                self.n
            )));
        }
        if labels.k() != k {
            return Err(LabelerError::EmptyCluster {
                expected: k,
                found: labels.k(),
            });
        }
        Ok(labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    fn column(xs: &[f64]) -> DataMatrix<f64> {
        DataMatrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

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
            .map(|a| truth.iter().zip(est).filter(|(&t, &e)| a[e] == t).count())
            .max()
            .unwrap() as f64
            / truth.len() as f64
    }

    #[test]
    fn two_points_two_clusters() {
        let fit = kmeans(&column(&[0.0, 10.0]), &KMeansConfig::new(2, 1)).unwrap();
        assert_ne!(fit.labels.cluster_of(0), fit.labels.cluster_of(1));
        assert_eq!(fit.wcss, 0.0);
    }

    #[test]
    fn four_collinear_points_match_best_bipartition() {
        let xs = [0.0, 1.0, 10.0, 11.0];
        // Oracle: WCSS of all 7 bipartitions.
        let wcss = |mask: u32| {
            let mut total = 0.0;
            for side in [true, false] {
                let pts: Vec<f64> = (0..4)
                    .filter(|i| ((mask >> i) & 1 == 1) == side)
                    .map(|i| xs[i])
                    .collect();
                let m = pts.iter().sum::<f64>() / pts.len() as f64;
                total += pts.iter().map(|p| (p - m) * (p - m)).sum::<f64>();
            }
            total
        };
        let best = (1u32..8)
            .min_by(|&a, &b| wcss(a).partial_cmp(&wcss(b)).unwrap())
            .unwrap();
        assert!(best == 0b0011 || best == 0b1100);
        let fit = kmeans(&column(&xs), &KMeansConfig::new(2, 3)).unwrap();
        let l = fit.labels.assignments();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
        assert_eq!(fit.wcss, wcss(best));
    }

    #[test]
    fn k_larger_than_n_rejected() {
        assert!(matches!(
            kmeans(&column(&[0.0, 1.0]), &KMeansConfig::new(3, 0)),
            Err(Error::InvalidClusterCount { k: 3, n: 2 })
        ));
        let mut cfg = KMeansConfig::new(1, 0);
        cfg.tol = 0.0;
        assert!(kmeans(&column(&[0.0, 1.0]), &cfg).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let fit = kmeans(
            &column(&[1.0, 1.0, 1.0, 1.0, 5.0]),
            &KMeansConfig::new(4, 9),
        )
        .unwrap();
        assert_eq!(fit.labels.k(), 4);
        assert!(fit.labels.sizes().iter().all(|&s| s >= 1));
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = rng_for(5, &[]);
        let xs: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let x = column(&xs);
        let a = kmeans(&x, &KMeansConfig::new(4, 11)).unwrap();
        let b = kmeans(&x, &KMeansConfig::new(4, 11)).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.wcss, b.wcss);
    }

    #[test]
    fn single_precision_kmeans() {
        let x = DataMatrix::<f32>::new(4, 1, vec![0.0, 0.5, 9.0, 9.5]).unwrap();
        let fit = kmeans(&x, &KMeansConfig::new(2, 0)).unwrap();
        assert_eq!(fit.labels.sizes(), &[2, 2]);
    }

    #[test]
    fn accuracy_examples() {
        let t = ClusterLabels::from_ids(&[1, 1, 2, 2, 3, 3]).unwrap();
        assert_eq!(accuracy(&t, &t).unwrap().accuracy, 1.0);
        let renamed = ClusterLabels::from_ids(&[2, 2, 3, 3, 1, 1]).unwrap();
        assert_eq!(accuracy(&t, &renamed).unwrap().accuracy, 1.0);
        let e = ClusterLabels::from_ids(&[1, 2, 2, 3, 3, 1]).unwrap();
        assert_eq!(
            brute_force_accuracy(t.assignments(), e.assignments(), 3),
            0.5
        );
        assert_eq!(accuracy(&t, &e).unwrap().accuracy, 0.5);
    }

    #[test]
    fn accuracy_with_unequal_k() {
        let t = ClusterLabels::from_ids(&[0, 0, 1, 1]).unwrap();
        let e = ClusterLabels::from_ids(&[0, 1, 2, 2]).unwrap();
        let r = accuracy(&t, &e).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.matching.iter().filter(|m| m.is_none()).count(), 1);
        assert!(accuracy(&t, &ClusterLabels::from_sizes(&[3]).unwrap()).is_err());
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = rng_for(17, &[]);
        for _ in 0..100 {
            let k = rng.random_range(1..=6usize);
            let n = rng.random_range(k..k + 30);
            let mut draw = || -> Vec<usize> {
                let mut v: Vec<usize> = (0..k).collect();
                v.extend((k..n).map(|_| rng.random_range(0..k)));
                v
            };
            let (t, e) = (draw(), draw());
            let lt = ClusterLabels::new(t.clone(), k).unwrap();
            let le = ClusterLabels::new(e.clone(), k).unwrap();
            let got = accuracy(&lt, &le).unwrap().accuracy;
            assert_eq!(got, brute_force_accuracy(&t, &e, k));
            assert_eq!(got, accuracy(&le, &lt).unwrap().accuracy);
        }
    }

    #[test]
    fn label_files() {
        let l = parse_labels("7\n7\n9\n").unwrap();
        assert_eq!((l.assignments(), l.k()), (&[0, 0, 1][..], 2));
        assert_eq!(parse_labels("1\n1\n1\n").unwrap().k(), 1);
        assert!(matches!(
            parse_labels("1\nx\n"),
            Err(Error::Record { line: 2, .. })
        ));
        assert!(matches!(
            parse_labels(""),
            Err(Error::Record { line: 1, .. })
        ));
    }

    #[test]
    fn dir_labeler_reports_missing_and_short_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("labels_k3.txt"), "1\n1\n2\n2\n").unwrap();
        std::fs::write(dir.path().join("labels_k2.txt"), "1\n1\n2\n2\n").unwrap();
        let lab = DirLabeler::new(dir.path(), 4);
        assert!(lab.labels(2).is_ok());
        assert!(matches!(
            lab.labels(3),
            Err(LabelerError::EmptyCluster {
                expected: 3,
                found: 2
            })
        ));
        assert!(matches!(lab.labels(4), Err(LabelerError::Failed(_))));
    }
}
