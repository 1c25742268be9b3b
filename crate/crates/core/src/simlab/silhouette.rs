use serde::Serialize;

use crate::data::DistanceMatrix;
use crate::edgecount::ClusterLabels;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mean silhouette width. Points in singleton clusters score 0.
pub fn mean_silhouette<T: Real>(d: &DistanceMatrix<T>, labels: &ClusterLabels) -> Result<f64> {
    let n = d.len();
    if labels.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: labels.n(),
        });
    }
    let k = labels.k();
    let sizes = labels.sizes();
    let mut sums = vec![0.0f64; k];
    let mut total = 0.0;
    for i in 0..n {
        let own = labels.cluster_of(i);
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, &dij) in d.row(i).iter().enumerate() {
            sums[labels.cluster_of(j)] += dij.to_f64().unwrap_or(f64::NAN);
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SilhouetteSelection {
    /// `(k, mean silhouette)` for every labeling with `k >= 2`.
    pub scores: Vec<(usize, f64)>,
    pub chosen_k: Option<usize>,
}

/// Picks the labeling with the largest mean silhouette; smaller `k` wins ties.
/// Labelings with fewer than two clusters are skipped.
pub fn silhouette_baseline<T: Real>(
    d: &DistanceMatrix<T>,
    labelings: &[ClusterLabels],
) -> Result<SilhouetteSelection> {
    let mut scores = Vec::new();
    for l in labelings.iter().filter(|l| l.k() >= 2) {
        scores.push((l.k(), mean_silhouette(d, l)?));
    }
    scores.sort_by_key(|&(k, _)| k);
    let mut chosen: Option<(usize, f64)> = None;
    for &(k, s) in &scores {
        if chosen.is_none_or(|(_, b)| s > b) {
            chosen = Some((k, s));
        }
    }
    Ok(SilhouetteSelection {
        scores,
        chosen_k: chosen.map(|(k, _)| k),
    })
}
