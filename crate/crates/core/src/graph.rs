//! Similarity graphs over observations: K-MST, K-NN, and externally supplied
//! edge lists.

use std::collections::HashSet;
use std::fmt::{Display, Write as _};
use std::str::FromStr;

use crate::data::DistanceMatrix;
use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

/// Undirected edge stored with `u < v`. The weight is kept for export and
/// diagnostics; the edge-count statistic never reads it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<W> {
    pub u: usize,
    pub v: usize,
    pub weight: Option<W>,
}

impl<W> Edge<W> {
    fn new(a: usize, b: usize, weight: Option<W>) -> Self {
        Self {
            u: a.min(b),
            v: a.max(b),
            weight,
        }
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.u, self.v)
    }
}

/// Simple undirected graph on `n` vertices with edges in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph<W = f64> {
    n: usize,
    edges: Vec<Edge<W>>,
    degrees: Vec<usize>,
}

impl<W: Clone> SimilarityGraph<W> {
    /// Builds a graph from edges that are already known to be in range and
    /// loop-free. Duplicates are dropped, keeping the first occurrence.
    fn from_clean_edges(n: usize, edges: impl IntoIterator<Item = Edge<W>>) -> Self {
        let mut seen = HashSet::new();
        let mut kept: Vec<Edge<W>> = edges
            .into_iter()
            .filter(|e| seen.insert(e.endpoints()))
            .collect();
        kept.sort_by_key(Edge::endpoints);
        let mut degrees = vec![0; n];
        for e in &kept {
            degrees[e.u] += 1;
            degrees[e.v] += 1;
        }
        Self {
            n,
            edges: kept,
            degrees,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge<W>] {
        &self.edges
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by_key(&key, Edge::endpoints)
            .is_ok()
    }

    /// Same graph with vertex `i` renamed to `new_index[i]`.
    pub fn relabel(&self, new_index: &[usize]) -> Self {
        Self::from_clean_edges(
            self.n,
            self.edges
                .iter()
                .map(|e| Edge::new(new_index[e.u], new_index[e.v], e.weight.clone())),
        )
    }

    /// Drops weights, e.g. to compare a graph with one re-read from a file.
    pub fn unweighted(&self) -> SimilarityGraph<W> {
        Self {
            n: self.n,
            edges: self
                .edges
                .iter()
                .map(|e| Edge::new(e.u, e.v, None))
                .collect(),
            degrees: self.degrees.clone(),
        }
    }
}

/// Graph-level quantities entering the permutation-null moments.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats<S> {
    pub n: usize,
    /// `|G|`, the number of edges.
    pub edges: usize,
    /// `sum_t |G_t|^2` over vertex degrees.
    pub sum_sq_degrees: u128,
    /// `sum_t |G_t|^2 - 4|G|^2 / n`, the spread of the degree sequence.
    pub degree_spread: S,
    /// `2|G|^2 / (n(n-1))`.
    pub pair_term: S,
}

/// Computes `|G|`, the degree-spread term and the pair term.
pub fn graph_stats<S: Scalar, W: Clone>(g: &SimilarityGraph<W>) -> GraphStats<S> {
    let n = g.n();
    let size = g.edge_count();
    let sum_sq: u128 = g.degrees().iter().map(|&d| (d as u128) * (d as u128)).sum();
    let size_sq = S::from_wide((size as i128) * (size as i128));
    let nn = S::from_count(n);
    let degree_spread =
        S::from_wide(sum_sq as i128) - S::from_count(4) * size_sq.clone() / nn.clone();
    let pair_term = S::from_count(2) * size_sq / (nn * S::from_count(n - 1));
    GraphStats {
        n,
        edges: size,
        sum_sq_degrees: sum_sq,
        degree_spread,
        pair_term,
    }
}

#[derive(Clone, Copy)]
struct Key<T> {
    weight: T,
    a: usize,
    b: usize,
}

impl<T: PartialOrd> Key<T> {
    fn less(&self, other: &Self) -> bool {
        match self.weight.partial_cmp(&other.weight) {
            Some(std::cmp::Ordering::Less) => true,
            Some(std::cmp::Ordering::Greater) => false,
            _ => (self.a, self.b) < (other.a, other.b),
        }
    }
}

/// The `K` edge-disjoint spanning trees of a K-MST, in extraction order.
///
/// Each round runs Prim's algorithm on the complete graph minus the edges of
/// earlier rounds. Edges are totally ordered by `(weight, min(u,v), max(u,v))`,
/// so every tree is unique and the construction is deterministic.
pub fn kmst_trees<T: Real>(d: &DistanceMatrix<T>, k: usize) -> Result<Vec<Vec<Edge<T>>>> {
    if k == 0 {
        return Err(Error::ZeroGraphK);
    }
    let n = d.len();
    let mut used = vec![false; n * n];
    let mut trees = Vec::with_capacity(k);
    for round in 0..k {
        match prim_excluding(d, &used) {
            Some(tree) => {
                for e in &tree {
                    used[e.u * n + e.v] = true;
                    used[e.v * n + e.u] = true;
                }
                trees.push(tree);
            }
            None => {
                return Err(Error::InfeasibleMst {
                    requested: k,
                    max_feasible: round,
                    n,
                })
            }
        }
    }
    Ok(trees)
}

fn prim_excluding<T: Real>(d: &DistanceMatrix<T>, used: &[bool]) -> Option<Vec<Edge<T>>> {
    let n = d.len();
    let mut in_tree = vec![false; n];
    let mut best: Vec<Option<Key<T>>> = vec![None; n];
    let mut tree = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let row = d.row(current);
        for x in 0..n {
            if in_tree[x] || used[current * n + x] {
                continue;
            }
            let cand = Key {
                weight: row[x],
                a: current.min(x),
                b: current.max(x),
            };
            if best[x].as_ref().is_none_or(|b| cand.less(b)) {
                best[x] = Some(cand);
            }
        }
        let mut next: Option<(usize, Key<T>)> = None;
        for (x, key) in best.iter().enumerate() {
            if in_tree[x] {
                continue;
            }
            if let Some(key) = key {
                if next.as_ref().is_none_or(|(_, b)| key.less(b)) {
                    next = Some((x, *key));
                }
            }
        }
        let (x, key) = next?;
        in_tree[x] = true;
        tree.push(Edge::new(key.a, key.b, Some(key.weight)));
        current = x;
    }
    tree.sort_by_key(Edge::endpoints);
    Some(tree)
}

/// Union of `k` edge-disjoint minimum spanning trees; `k (n - 1)` edges.
pub fn build_kmst<T: Real>(d: &DistanceMatrix<T>, k: usize) -> Result<SimilarityGraph<T>> {
    let trees = kmst_trees(d, k)?;
    Ok(SimilarityGraph::from_clean_edges(
        d.len(),
        trees.into_iter().flatten(),
    ))
}

/// Symmetrized K-nearest-neighbor graph: `(u, v)` is an edge when either end
/// lists the other among its `k` nearest. Distance ties go to the smaller index.
pub fn build_knn<T: Real>(d: &DistanceMatrix<T>, k: usize) -> Result<SimilarityGraph<T>> {
    let n = d.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidNeighborCount { k, n });
    }
    let mut edges = Vec::with_capacity(n * k);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for u in 0..n {
        let row = d.row(u);
        order.clear();
        order.extend((0..n).filter(|&v| v != u));
        order.sort_by(|&a, &b| {
            row[a]
                .partial_cmp(&row[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        edges.extend(order[..k].iter().map(|&v| Edge::new(u, v, Some(row[v]))));
    }
    Ok(SimilarityGraph::from_clean_edges(n, edges))
}

/// One line of an edge-list file.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord<W> {
    /// 1-based line (or record) number for diagnostics.
    pub line: usize,
    pub u: usize,
    pub v: usize,
    pub weight: Option<W>,
}

impl<W> EdgeRecord<W> {
    pub fn new(line: usize, u: usize, v: usize, weight: Option<W>) -> Self {
        Self { line, u, v, weight }
    }
}

/// Validates and deduplicates externally supplied edges.
pub fn graph_from_edges<W: Clone>(
    n: usize,
    records: &[EdgeRecord<W>],
) -> Result<SimilarityGraph<W>> {
    if n < 2 {
        return Err(Error::TooFewObservations { min: 2, found: n });
    }
    for r in records {
        if r.u >= n || r.v >= n {
            return Err(Error::Record {
                line: r.line,
                msg: format!("vertex index out of range [0, {n})"),
            });
        }
        if r.u == r.v {
            return Err(Error::Record {
                line: r.line,
                msg: "self-loop".into(),
            });
        }
    }
    Ok(SimilarityGraph::from_clean_edges(
        n,
        records
            .iter()
            .map(|r| Edge::new(r.u, r.v, r.weight.clone())),
    ))
}

/// Parses `u,v` or `u,v,w` lines; blank lines and `#` comments are skipped.
pub fn parse_edge_list<W: FromStr>(text: &str) -> Result<Vec<EdgeRecord<W>>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::Record {
                line,
                msg: format!("expected 'u,v' or 'u,v,w', found {} fields", fields.len()),
            });
        }
        let vertex = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Record {
                line,
                msg: format!("invalid vertex '{s}'"),
            })
        };
        let weight = match fields.get(2) {
            Some(w) => Some(w.parse::<W>().map_err(|_| Error::Record {
                line,
                msg: format!("invalid weight '{w}'"),
            })?),
            None => None,
        };
        out.push(EdgeRecord::new(
            line,
            vertex(fields[0])?,
            vertex(fields[1])?,
            weight,
        ));
    }
    Ok(out)
}

/// Renders the edge-list format; each header line is written as a `#` comment.
pub fn write_edge_list<W: Display + Clone>(g: &SimilarityGraph<W>, header: &[String]) -> String {
    let mut s = String::new();
    for h in header {
        let _ = writeln!(s, "# {h}");
    }
    for e in g.edges() {
        match &e.weight {
            Some(w) => {
                let _ = writeln!(s, "{},{},{}", e.u, e.v, w);
            }
            None => {
                let _ = writeln!(s, "{},{}", e.u, e.v);
            }
        }
    }
    s
}
