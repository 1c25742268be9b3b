use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{pairwise_distances, DataMatrix, Metric};
use crate::edgecount::ClusterLabels;
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// The versioned scenario file shipped with the crate.
pub const BUILTIN_SCENARIOS: &str = include_str!("../../config/scenarios.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ScenarioId {
    I,
    II,
    III,
    IV,
    V,
    #[serde(rename = "null")]
    Null,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] = [
        ScenarioId::I,
        ScenarioId::II,
        ScenarioId::III,
        ScenarioId::IV,
        ScenarioId::V,
        ScenarioId::Null,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::I => "I",
            ScenarioId::II => "II",
            ScenarioId::III => "III",
            ScenarioId::IV => "IV",
            ScenarioId::V => "V",
            ScenarioId::Null => "null",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Exponential,
}

/// Fully resolved generator parameters for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub description: String,
    pub family: Family,
    pub sizes: Vec<usize>,
    pub dim: usize,
    pub shift: f64,
    pub scales: Vec<f64>,
    pub correlation: f64,
    pub rates: Vec<f64>,
    pub seed: u64,
    /// Parameters are calibrated reconstructions, not published values.
    pub reconstructed: bool,
    pub config_version: u32,
}

impl ScenarioSpec {
    pub fn true_k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.true_k();
        let fail = |m: String| Err(Error::ScenarioConfig(format!("scenario {}: {m}", self.id)));
        if k == 0 || self.sizes.contains(&0) {
            return fail("sizes must be non-empty and positive".into());
        }
        if self.dim == 0 {
            return fail("dim must be at least 1".into());
        }
        if self.scales.len() != k || self.scales.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return fail(format!("need {k} positive scales"));
        }
        if self.correlation.is_nan() || self.correlation.abs() >= 1.0 {
            return fail("correlation must lie in (-1, 1)".into());
        }
        if self.family == Family::Exponential
            && (self.rates.len() != k || self.rates.iter().any(|&r| r.is_nan() || r <= 0.0))
        {
            return fail(format!("exponential family needs {k} positive rates"));
        }
        if !self.shift.is_finite() {
            return fail("shift must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Defaults {
    dim: usize,
    shift: f64,
    #[serde(default)]
    correlation: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    #[serde(default)]
    description: String,
    family: Family,
    sizes: Vec<usize>,
    dim: Option<usize>,
    shift: Option<f64>,
    scales: Option<Vec<f64>>,
    correlation: Option<f64>,
    rates: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    reconstructed: bool,
    defaults: Defaults,
    scenario: BTreeMap<String, Entry>,
}

/// Parsed scenario file.
#[derive(Debug)]
pub struct ScenarioConfig {
    file: ScenarioFile,
}

impl ScenarioConfig {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_SCENARIOS).expect("built-in scenario file is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::ScenarioConfig(e.to_string()))?;
        for key in file.scenario.keys() {
            key.parse::<ScenarioId>()?;
        }
        let cfg = Self { file };
        for id in cfg.ids() {
            cfg.spec(id, 0)?;
        }
        Ok(cfg)
    }

    pub fn version(&self) -> u32 {
        self.file.version
    }

    pub fn ids(&self) -> Vec<ScenarioId> {
        let mut ids: Vec<ScenarioId> = self
            .file
            .scenario
            .keys()
            .filter_map(|k| k.parse().ok())
            .collect();
        ids.sort();
        ids
    }

    pub fn spec(&self, id: ScenarioId, seed: u64) -> Result<ScenarioSpec> {
        let entry = self
            .file
            .scenario
            .iter()
            .find(|(k, _)| k.parse::<ScenarioId>().ok() == Some(id))
            .map(|(_, e)| e.clone())
            .ok_or_else(|| Error::UnknownScenario(id.to_string()))?;
        let d = &self.file.defaults;
        let k = entry.sizes.len();
        let spec = ScenarioSpec {
            id,
            description: entry.description,
            family: entry.family,
            dim: entry.dim.unwrap_or(d.dim),
            shift: entry.shift.unwrap_or(d.shift),
            scales: entry.scales.unwrap_or_else(|| vec![1.0; k]),
            correlation: entry.correlation.unwrap_or(d.correlation),
            rates: entry.rates.unwrap_or_default(),
            sizes: entry.sizes,
            seed,
            reconstructed: self.file.reconstructed,
            config_version: self.file.version,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Draws the data set and its ground-truth labels. Deterministic in
/// `spec.seed`; rows are grouped by cluster.
pub fn generate(spec: &ScenarioSpec) -> Result<(DataMatrix<f64>, ClusterLabels)> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, &[]);
    let (d, k) = (spec.dim, spec.true_k());
    let block = (d / k).max(1);
    let mut values = Vec::with_capacity(spec.n() * d);
    let mut noise = vec![0.0; d];
    for (j, &size) in spec.sizes.iter().enumerate() {
        let start = (j * block).min(d);
        let end = ((j + 1) * block).min(d);
        let offset = if end > start {
            spec.shift / ((end - start) as f64).sqrt()
        } else {
            0.0
        };
        let exp = match spec.family {
            Family::Exponential => Some(
                Exp::new(spec.rates[j])
                    .map_err(|e| Error::ScenarioConfig(format!("rate {}: {e}", spec.rates[j])))?,
            ),
            Family::Gaussian => None,
        };
        let innovation = (1.0 - spec.correlation * spec.correlation).sqrt();
        for _ in 0..size {
            match &exp {
                Some(exp) => noise.iter_mut().for_each(|x| *x = exp.sample(&mut rng)),
                None => {
                    for f in 0..d {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        noise[f] = if f == 0 {
                            e
                        } else {
                            spec.correlation * noise[f - 1] + innovation * e
                        };
                    }
                }
            }
            for (f, &z) in noise.iter().enumerate() {
                let mean = if (start..end).contains(&f) {
                    offset
                } else {
                    0.0
                };
                values.push(mean + spec.scales[j] * z);
            }
        }
    }
    let data = DataMatrix::new(spec.n(), d, values)?;
    let labels = ClusterLabels::from_sizes(&spec.sizes)?;
    Ok((data, labels))
}

/// Mean between-cluster over mean within-cluster Euclidean distance for three
/// clusters of 100 points whose centers form a triangle of side
/// `center_distance` in the first two coordinates, with noise scales
/// (1, 1, 1.5) in `dim` dimensions. Tends to 1 as `dim` grows.
pub fn equidistance_ratio(dim: usize, center_distance: f64, seed: u64) -> Result<f64> {
    let dim = dim.max(2);
    let mut rng = rng_for(seed, &[]);
    let h = center_distance * 3f64.sqrt() / 2.0;
    let centers = [
        [0.0, 0.0],
        [center_distance, 0.0],
        [center_distance / 2.0, h],
    ];
    let scales = [1.0, 1.0, 1.5];
    let mut values = Vec::with_capacity(300 * dim);
    for j in 0..3 {
        for _ in 0..100 {
            for f in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                let mean = centers[j].get(f).copied().unwrap_or(0.0);
                values.push(mean + scales[j] * z);
            }
        }
    }
    let x = DataMatrix::new(300, dim, values)?;
    let dist = pairwise_distances(&x, Metric::Euclidean);
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for u in 0..300 {
        for v in u + 1..300 {
            if u / 100 == v / 100 {
                within += dist.get(u, v);
                nw += 1;
            } else {
                between += dist.get(u, v);
                nb += 1;
            }
        }
    }
    Ok((between / nb as f64) / (within / nw as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_config_has_all_scenarios() {
        let cfg = ScenarioConfig::builtin();
        assert_eq!(cfg.ids(), ScenarioId::ALL.to_vec());
        let truth: Vec<usize> = ScenarioId::ALL
            .iter()
            .map(|&id| cfg.spec(id, 0).unwrap().true_k())
            .collect();
        assert_eq!(truth, vec![3, 4, 3, 4, 4, 1]);
        assert!(cfg.spec(ScenarioId::I, 0).unwrap().reconstructed);
        assert_eq!(cfg.spec(ScenarioId::IV, 0).unwrap().dim, 400);
    }

    #[test]
    fn unknown_scenario_rejected() {
        assert!(matches!(
            "VI".parse::<ScenarioId>(),
            Err(Error::UnknownScenario(_))
        ));
        assert_eq!("null".parse::<ScenarioId>().unwrap(), ScenarioId::Null);
        let bad = BUILTIN_SCENARIOS.replace("[scenario.V]", "[scenario.VII]");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        let bad = BUILTIN_SCENARIOS.replace("correlation = 0.5", "correlation = 1.5");
        assert!(matches!(
            ScenarioConfig::from_toml(&bad),
            Err(Error::ScenarioConfig(_))
        ));
        let bad = BUILTIN_SCENARIOS.replace("rates = [1.0, 1.0, 1.25, 1.25]", "rates = [1.0]");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = ScenarioConfig::builtin().spec(ScenarioId::I, 42).unwrap();
        spec.dim = 20;
        let (a, la) = generate(&spec).unwrap();
        let (b, lb) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.sizes(), &[100, 100, 100]);
        let (c, _) = generate(&spec.with_seed(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn null_scenario_is_one_cluster() {
        let spec = ScenarioConfig::builtin().spec(ScenarioId::Null, 1).unwrap();
        assert_eq!(spec.true_k(), 1);
        let mut small = spec.clone();
        small.dim = 5;
        let (x, l) = generate(&small).unwrap();
        assert_eq!(l.k(), 1);
        assert_eq!(x.nrows(), spec.n());
    }

    #[test]
    fn correlated_features_have_target_lag_one_correlation() {
        let mut spec = ScenarioConfig::builtin().spec(ScenarioId::IV, 3).unwrap();
        spec.shift = 0.0;
        let (x, _) = generate(&spec).unwrap();
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for r in x.rows() {
            for f in 1..r.len() {
                sxy += r[f] * r[f - 1];
                sxx += r[f - 1] * r[f - 1];
            }
        }
        assert!((sxy / sxx - 0.5).abs() < 0.02);
    }

    #[test]
    fn exponential_means_follow_rates() {
        let mut spec = ScenarioConfig::builtin().spec(ScenarioId::V, 3).unwrap();
        spec.shift = 0.0;
        let (x, _) = generate(&spec).unwrap();
        let mean_of = |rows: std::ops::Range<usize>| {
            let m = rows.len() * x.ncols();
            rows.map(|i| x.row(i).iter().sum::<f64>()).sum::<f64>() / m as f64
        };
        assert!((mean_of(0..100) - 1.0).abs() < 0.02);
        assert!((mean_of(300..400) - 0.8).abs() < 0.02);
    }
}
