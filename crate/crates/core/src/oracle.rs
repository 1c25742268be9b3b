//! Permutation oracles for the null moments: exact enumeration of all
//! distinct label placements, and seeded Monte Carlo reshuffling.
//!
//! Nothing here calls the closed-form moments except [`mc_standardized`],
//! whose purpose is to check them.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::edgecount::{null_moments, weighted_within, ClusterLabels, NullMoments};
use crate::error::{Error, Result};
use crate::graph::{graph_stats, SimilarityGraph};
use crate::scalar::{relative_error, Scalar};
use crate::seed::rng_for;

/// Largest number of placements [`exhaustive_moments`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;
/// Smallest draw count accepted by the Monte Carlo oracle.
pub const MIN_DRAWS: usize = 1000;
const BATCH: usize = 1000;

/// Moments of the within-cluster counts estimated by permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate<S> {
    pub expected: Vec<S>,
    pub variance: Vec<S>,
    pub covariance: Vec<Vec<S>>,
    pub weighted_mean: S,
    pub weighted_variance: S,
    /// Standard errors; present for Monte Carlo estimates only.
    pub stderr: Option<McStderr>,
    /// Placements enumerated (exhaustive) or drawn (Monte Carlo).
    pub draws: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McStderr {
    pub expected: Vec<f64>,
    /// Standard error of each covariance entry; the diagonal is the standard
    /// error of the variances.
    pub covariance: Vec<Vec<f64>>,
    pub weighted_mean: f64,
    pub weighted_variance: f64,
}

impl<S: Scalar> OracleEstimate<S> {
    /// Largest relative error (unit-floored) of `closed` against this estimate
    /// over every per-cluster and weighted moment.
    pub fn max_relative_error(&self, closed: &NullMoments<S>) -> f64 {
        let mut worst = relative_error(&closed.weighted_mean, &self.weighted_mean).max(
            relative_error(&closed.weighted_variance, &self.weighted_variance),
        );
        for (a, b) in closed.expected.iter().zip(&self.expected) {
            worst = worst.max(relative_error(a, b));
        }
        for (ra, rb) in closed.covariance.iter().zip(&self.covariance) {
            for (a, b) in ra.iter().zip(rb) {
                worst = worst.max(relative_error(a, b));
            }
        }
        worst
    }

    /// Exact agreement with the closed form, for rational scalars.
    pub fn matches_exactly(&self, closed: &NullMoments<S>) -> bool {
        closed.expected == self.expected
            && closed.covariance == self.covariance
            && closed.weighted_mean == self.weighted_mean
            && closed.weighted_variance == self.weighted_variance
    }
}

/// `n! / prod(n_j!)`, or `None` once it exceeds `cap`.
pub fn placement_count(sizes: &[usize], cap: u128) -> Option<u128> {
    let mut count: u128 = 1;
    let mut placed: u128 = 0;
    for &s in sizes {
        // Multiply binomials C(placed + s, s) incrementally; each partial
        // product is an integer.
        for i in 1..=s as u128 {
            placed += 1;
            count = count.checked_mul(placed)? / i;
            if count > cap {
                return None;
            }
        }
    }
    Some(count)
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn counts_into<W: Clone>(g: &SimilarityGraph<W>, labels: &[usize], out: &mut [i128]) {
    out.iter_mut().for_each(|c| *c = 0);
    for e in g.edges() {
        let c = labels[e.u];
        if c == labels[e.v] {
            out[c] += 1;
        }
    }
}

/// Integer power sums over all distinct placements.
struct ExactSums {
    draws: i128,
    /// lcm of the sizes; `W * scale` is an integer for every placement.
    scale: i128,
    first: Vec<i128>,
    cross: Vec<Vec<i128>>,
    w_first: i128,
    w_second: i128,
}

impl ExactSums {
    fn collect<W: Clone>(g: &SimilarityGraph<W>, sizes: &[usize]) -> Result<Self> {
        let base = ClusterLabels::from_sizes(sizes)?;
        if base.n() != g.n() {
            return Err(Error::LengthMismatch {
                expected: g.n(),
                found: base.n(),
            });
        }
        if placement_count(sizes, ENUMERATION_LIMIT).is_none() {
            return Err(Error::EnumerationTooLarge {
                count: placement_count(sizes, u128::MAX / 2).unwrap_or(u128::MAX),
                limit: ENUMERATION_LIMIT,
            });
        }
        let k = sizes.len();
        let scale = sizes
            .iter()
            .fold(1u128, |l, &s| l / gcd(l, s as u128) * s as u128) as i128;
        let per_cluster: Vec<i128> = sizes.iter().map(|&s| scale / s as i128).collect();

        let mut labels = base.assignments().to_vec();
        let mut r = vec![0i128; k];
        let mut sums = ExactSums {
            draws: 0,
            scale,
            first: vec![0; k],
            cross: vec![vec![0; k]; k],
            w_first: 0,
            w_second: 0,
        };
        loop {
            counts_into(g, &labels, &mut r);
            sums.draws += 1;
            let mut w = 0;
            for i in 0..k {
                sums.first[i] += r[i];
                w += r[i] * per_cluster[i];
                for j in 0..k {
                    sums.cross[i][j] += r[i] * r[j];
                }
            }
            sums.w_first += w;
            sums.w_second += w * w;
            if !next_permutation(&mut labels) {
                break;
            }
        }
        Ok(sums)
    }

    fn moments<S: Scalar>(&self) -> OracleEstimate<S> {
        let n = self.draws;
        let k = self.first.len();
        let nn = S::from_wide(n);
        let n2 = nn.clone() * nn.clone();
        let expected: Vec<S> = self
            .first
            .iter()
            .map(|&s| S::from_wide(s) / nn.clone())
            .collect();
        let covariance: Vec<Vec<S>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        S::from_wide(n * self.cross[i][j] - self.first[i] * self.first[j])
                            / n2.clone()
                    })
                    .collect()
            })
            .collect();
        let variance = (0..k).map(|i| covariance[i][i].clone()).collect();
        let scale = S::from_wide(self.scale);
        let weighted_mean = S::from_wide(self.w_first) / (nn.clone() * scale.clone());
        let weighted_variance = S::from_wide(n * self.w_second - self.w_first * self.w_first)
            / (n2 * scale.clone() * scale);
        OracleEstimate {
            expected,
            variance,
            covariance,
            weighted_mean,
            weighted_variance,
            stderr: None,
            draws: n as u128,
        }
    }
}

/// Exact permutation moments by enumerating every distinct placement of the
/// cluster sizes over the vertices. Accumulation is in integers, so the
/// result is exact for rational `S`.
pub fn exhaustive_moments<S: Scalar, W: Clone>(
    g: &SimilarityGraph<W>,
    sizes: &[usize],
) -> Result<OracleEstimate<S>> {
    Ok(ExactSums::collect(g, sizes)?.moments())
}

/// Exact moments in two scalar types from a single enumeration.
pub fn exhaustive_moments_pair<A: Scalar, B: Scalar, W: Clone>(
    g: &SimilarityGraph<W>,
    sizes: &[usize],
) -> Result<(OracleEstimate<A>, OracleEstimate<B>)> {
    let sums = ExactSums::collect(g, sizes)?;
    Ok((sums.moments(), sums.moments()))
}

/// Runs `draws` uniform placements in fixed batches of 1000, each with its
/// own derived seed, and returns the per-batch accumulators in batch order.
fn run_batches<W, A, F>(
    g: &SimilarityGraph<W>,
    sizes: &[usize],
    draws: usize,
    seed: u64,
    step: F,
) -> Result<Vec<A>>
where
    W: Clone + Sync,
    A: Default + Send,
    F: Fn(&mut A, &[usize]) + Sync,
{
    if draws < MIN_DRAWS {
        return Err(Error::TooFewDraws {
            min: MIN_DRAWS,
            found: draws,
        });
    }
    let base = ClusterLabels::from_sizes(sizes)?;
    if base.n() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            found: base.n(),
        });
    }
    let batches = draws.div_ceil(BATCH);
    Ok((0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(seed, &[b as u64]);
            let mut labels = base.assignments().to_vec();
            let mut acc = A::default();
            let count = BATCH.min(draws - b * BATCH);
            for _ in 0..count {
                labels.shuffle(&mut rng);
                step(&mut acc, &labels);
            }
            acc
        })
        .collect())
}

#[derive(Default)]
struct McSums {
    draws: i128,
    first: Vec<i128>,
    /// `sum R_i R_j`, `sum R_i^2 R_j`, `sum R_i^2 R_j^2`.
    p11: Vec<Vec<i128>>,
    p21: Vec<Vec<i128>>,
    p22: Vec<Vec<i128>>,
    /// Power sums of `W - shift`, powers 1..=4.
    w: [f64; 4],
}

impl McSums {
    fn ensure(&mut self, k: usize) {
        if self.first.len() != k {
            self.first = vec![0; k];
            self.p11 = vec![vec![0; k]; k];
            self.p21 = vec![vec![0; k]; k];
            self.p22 = vec![vec![0; k]; k];
        }
    }

    fn merge(&mut self, other: &McSums) {
        self.ensure(other.first.len());
        self.draws += other.draws;
        for i in 0..self.first.len() {
            self.first[i] += other.first[i];
            for j in 0..self.first.len() {
                self.p11[i][j] += other.p11[i][j];
                self.p21[i][j] += other.p21[i][j];
                self.p22[i][j] += other.p22[i][j];
            }
        }
        for p in 0..4 {
            self.w[p] += other.w[p];
        }
    }
}

fn se(spread: f64, n: f64) -> f64 {
    (spread.max(0.0) / n).sqrt()
}

/// Monte Carlo permutation moments from `draws` seeded Fisher–Yates
/// shuffles. Results are independent of thread count.
pub fn mc_moments<W: Clone + Sync>(
    g: &SimilarityGraph<W>,
    sizes: &[usize],
    draws: usize,
    seed: u64,
) -> Result<OracleEstimate<f64>> {
    let k = sizes.len();
    let shift = {
        let base = ClusterLabels::from_sizes(sizes)?;
        let mut r = vec![0i128; k];
        if base.n() == g.n() {
            counts_into(g, base.assignments(), &mut r);
        }
        let counts: Vec<usize> = r.iter().map(|&c| c as usize).collect();
        weighted_within::<f64>(&counts, sizes)
    };
    let batches = run_batches(g, sizes, draws, seed, |acc: &mut McSums, labels| {
        acc.ensure(k);
        let mut r = vec![0i128; k];
        counts_into(g, labels, &mut r);
        acc.draws += 1;
        let mut w = 0.0;
        for i in 0..k {
            acc.first[i] += r[i];
            w += r[i] as f64 / sizes[i] as f64;
            for j in 0..k {
                acc.p11[i][j] += r[i] * r[j];
                acc.p21[i][j] += r[i] * r[i] * r[j];
                acc.p22[i][j] += r[i] * r[i] * r[j] * r[j];
            }
        }
        let d = w - shift;
        let mut p = d;
        for slot in acc.w.iter_mut() {
            *slot += p;
            p *= d;
        }
    })?;
    let mut total = McSums::default();
    for b in &batches {
        total.merge(b);
    }

    let n = total.draws;
    let nf = n as f64;
    let expected: Vec<f64> = total.first.iter().map(|&s| s as f64 / nf).collect();
    let mut covariance = vec![vec![0.0; k]; k];
    let mut cov_se = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let cov = (n * total.p11[i][j] - total.first[i] * total.first[j]) as f64 / (nf * nf);
            covariance[i][j] = cov;
            let (a, b) = (expected[i], expected[j]);
            let m = |s: i128| s as f64 / nf;
            let m22 =
                m(total.p22[i][j]) - 2.0 * b * m(total.p21[i][j]) - 2.0 * a * m(total.p21[j][i])
                    + b * b * m(total.p11[i][i])
                    + a * a * m(total.p11[j][j])
                    + 4.0 * a * b * m(total.p11[i][j])
                    - 3.0 * a * a * b * b;
            cov_se[i][j] = se(m22 - cov * cov, nf);
        }
    }
    let variance: Vec<f64> = (0..k).map(|i| covariance[i][i]).collect();
    let [s1, s2, s3, s4] = total.w.map(|s| s / nf);
    let w_var = s2 - s1 * s1;
    let w_m4 = s4 - 4.0 * s1 * s3 + 6.0 * s1 * s1 * s2 - 3.0 * s1.powi(4);
    let stderr = McStderr {
        expected: variance.iter().map(|&v| se(v, nf)).collect(),
        covariance: cov_se,
        weighted_mean: se(w_var, nf),
        weighted_variance: se(w_m4 - w_var * w_var, nf),
    };
    Ok(OracleEstimate {
        expected,
        variance,
        covariance,
        weighted_mean: shift + s1,
        weighted_variance: w_var,
        stderr: Some(stderr),
        draws: n as u128,
    })
}

/// Empirical distribution summary of `Z = (W - E) / sqrt(Var)` under random
/// relabeling, with `E` and `Var` from the closed form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZSummary {
    pub draws: usize,
    pub mean: f64,
    pub variance: f64,
    pub mean_stderr: f64,
    pub variance_stderr: f64,
}

#[derive(Default)]
struct ZSums {
    s: [f64; 4],
}

pub fn mc_standardized<W: Clone + Sync>(
    g: &SimilarityGraph<W>,
    sizes: &[usize],
    draws: usize,
    seed: u64,
) -> Result<ZSummary> {
    let moments = null_moments::<f64>(&graph_stats(g), sizes)?;
    if moments.weighted_variance.is_nan() || moments.weighted_variance <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let (mean, sd) = (moments.weighted_mean, moments.weighted_variance.sqrt());
    let k = sizes.len();
    let batches = run_batches(g, sizes, draws, seed, |acc: &mut ZSums, labels| {
        let mut r = vec![0i128; k];
        counts_into(g, labels, &mut r);
        let w: f64 = (0..k).map(|i| r[i] as f64 / sizes[i] as f64).sum();
        let z = (w - mean) / sd;
        let mut p = z;
        for slot in acc.s.iter_mut() {
            *slot += p;
            p *= z;
        }
    })?;
    let mut s = [0.0; 4];
    for b in &batches {
        for (acc, x) in s.iter_mut().zip(b.s) {
            *acc += x;
        }
    }
    let nf = draws as f64;
    let [m1, m2, m3, m4] = s.map(|x| x / nf);
    let var = m2 - m1 * m1;
    let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
    Ok(ZSummary {
        draws,
        mean: m1,
        variance: var,
        mean_stderr: se(var, nf),
        variance_stderr: se(c4 - var * var, nf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{graph_from_edges, EdgeRecord};
    use num_rational::BigRational;

    fn graph(n: usize, e: &[(usize, usize)]) -> SimilarityGraph<f64> {
        let recs: Vec<_> = e
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| EdgeRecord::new(i + 1, u, v, None))
            .collect();
        graph_from_edges(n, &recs).unwrap()
    }

    fn rat(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn multiset_permutations_are_distinct_and_complete() {
        let mut v = vec![0, 0, 1, 1];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 6);
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 6);
        assert_eq!(placement_count(&[2, 2], u128::MAX), Some(6));
        assert_eq!(placement_count(&[1; 8], u128::MAX), Some(40320));
        assert_eq!(placement_count(&[1; 12], 1_000_000), None);
    }

    #[test]
    fn star_by_enumeration() {
        let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let o: OracleEstimate<BigRational> = exhaustive_moments(&star, &[2, 2]).unwrap();
        assert_eq!(o.draws, 6);
        assert_eq!(o.expected[0], rat(1, 2));
        assert_eq!(o.variance[0], rat(1, 4));
        assert_eq!(o.covariance[0][1], rat(-1, 4));
        assert_eq!(o.weighted_variance, rat(0, 1));
    }

    #[test]
    fn path_by_enumeration() {
        let path = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let o: OracleEstimate<BigRational> = exhaustive_moments(&path, &[2, 2]).unwrap();
        assert_eq!(o.weighted_mean, rat(1, 2));
        assert_eq!(o.weighted_variance, rat(1, 6));
    }

    #[test]
    fn single_cluster_has_no_variance() {
        let g = graph(5, &[(0, 1), (1, 2), (3, 4)]);
        let o: OracleEstimate<f64> = exhaustive_moments(&g, &[5]).unwrap();
        assert_eq!(o.draws, 1);
        assert_eq!(o.expected, vec![3.0]);
        assert_eq!(o.variance, vec![0.0]);
        assert_eq!(o.weighted_variance, 0.0);
    }

    #[test]
    fn enumeration_limit_enforced() {
        let edges: Vec<_> = (1..12).map(|i| (i - 1, i)).collect();
        let g = graph(12, &edges);
        assert!(matches!(
            exhaustive_moments::<f64, _>(&g, &[1; 12]),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn monte_carlo_star_converges() {
        let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let o = mc_moments(&star, &[2, 2], 100_000, 1).unwrap();
        let se = o.stderr.as_ref().unwrap();
        assert!(
            (o.expected[0] - 0.5).abs() <= 3.0 * se.expected[0],
            "{} {}",
            o.expected[0],
            se.expected[0]
        );
        assert!(se.expected[0] > 0.0);
        // W is constant on the star, so its variance and standard error vanish.
        assert!(o.weighted_variance.abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_stderr_scales_with_draws() {
        let edges: Vec<_> = (1..10)
            .map(|i| (i - 1, i))
            .chain([(0, 5), (2, 7)])
            .collect();
        let g = graph(10, &edges);
        let small = mc_moments(&g, &[4, 3, 3], 1000, 1).unwrap();
        let large = mc_moments(&g, &[4, 3, 3], 1_000_000, 1).unwrap();
        let ratio = small.stderr.unwrap().expected[0] / large.stderr.unwrap().expected[0];
        let target = 1000f64.sqrt();
        assert!((ratio / target - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn too_few_draws() {
        let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        assert!(matches!(
            mc_moments(&star, &[2, 2], 999, 0),
            Err(Error::TooFewDraws { .. })
        ));
    }
}
