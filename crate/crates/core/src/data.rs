//! Observation matrices, distance matrices and their CSV intake.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `n` observations of `d` real features, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Real> DataMatrix<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if rows < 2 {
            return Err(Error::TooFewObservations {
                min: 2,
                found: rows,
            });
        }
        if cols == 0 || values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols.max(1),
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / cols });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Ragged {
                    row: i,
                    expected: cols,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    /// Applies the same permutation to the rows: row `i` of the result is
    /// row `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &i in order {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    SquaredEuclidean,
    Manhattan,
}

impl Metric {
    pub fn distance<T: Real>(self, a: &[T], b: &[T]) -> T {
        match self {
            Metric::Euclidean => sq_dist(a, b).sqrt(),
            Metric::SquaredEuclidean => sq_dist(a, b),
            Metric::Manhattan => a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::SquaredEuclidean => "sqeuclidean",
            Metric::Manhattan => "manhattan",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl serde::Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "sqeuclidean" | "squared-euclidean" => Ok(Metric::SquaredEuclidean),
            "manhattan" => Ok(Metric::Manhattan),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

#[inline]
pub(crate) fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Dense symmetric `n x n` dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Real> DistanceMatrix<T> {
    /// Validates a full square matrix given row-major.
    pub fn from_square(n: usize, values: Vec<T>) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewObservations { min: 2, found: n });
        }
        if values.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        for u in 0..n {
            if values[u * n + u] != T::zero() {
                return Err(Error::InvalidDistance(format!("nonzero diagonal at {u}")));
            }
            for v in 0..n {
                let x = values[u * n + v];
                if !x.is_finite() || x < T::zero() {
                    return Err(Error::InvalidDistance(format!(
                        "entry ({u},{v}) is negative or non-finite"
                    )));
                }
                if x != values[v * n + u] {
                    return Err(Error::InvalidDistance(format!("asymmetric at ({u},{v})")));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.values[u * self.n + v]
    }

    pub fn row(&self, u: usize) -> &[T] {
        &self.values[u * self.n..(u + 1) * self.n]
    }
}

/// All pairwise distances between the rows of `x`.
pub fn pairwise_distances<T: Real>(x: &DataMatrix<T>, metric: Metric) -> DistanceMatrix<T> {
    let n = x.nrows();
    let mut values = vec![T::zero(); n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(u, row)| {
        let xu = x.row(u);
        for (v, slot) in row.iter_mut().enumerate() {
            if u != v {
                *slot = metric.distance(xu, x.row(v));
            }
        }
    });
    // |x - y| == |y - x| in IEEE arithmetic, so both triangles agree bitwise.
    DistanceMatrix { n, values }
}

/// Parses a numeric CSV table. A first row containing any non-numeric field
/// is taken as a header and skipped.
pub fn parse_csv_table<T: Real>(text: &str) -> Result<Vec<Vec<T>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<T>, _> =
            record.iter().map(|f| f.parse::<T>()).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if idx == 0 => continue,
            Err(_) => {
                let bad = record
                    .iter()
                    .find(|f| f.parse::<T>().is_err())
                    .unwrap_or("");
                return Err(Error::Record {
                    line,
                    msg: format!("non-numeric field '{bad}'"),
                });
            }
        };
        if let Some(pos) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Record {
                line,
                msg: format!("non-finite value in column {}", pos + 1),
            });
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Record {
                    line,
                    msg: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_data_csv<T: Real>(path: impl AsRef<Path>) -> Result<DataMatrix<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DataMatrix::from_rows(&parse_csv_table(&text)?)
}

pub fn read_distance_csv<T: Real>(path: impl AsRef<Path>) -> Result<DistanceMatrix<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_csv_table::<T>(&text)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidDistance(format!("matrix is not {n} x {n}")));
    }
    DistanceMatrix::from_square(n, rows.concat())
}
