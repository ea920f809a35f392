//! Undirected node-attributed graphs with implicit self-loops and the
//! symmetric-normalized feature aggregation that feeds the kernel.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{norm2, Scalar};

/// Canonical undirected edge, always stored with `u < v`.
pub type Edge = (usize, usize);

/// Orders an endpoint pair canonically.
#[inline]
pub fn canonical(u: usize, v: usize) -> Edge {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Counters collected while building a graph from a raw edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub duplicate_edges: usize,
    pub self_loops_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct Graph<T> {
    features: Arc<Matrix<T>>,
    edges: BTreeSet<Edge>,
    /// Sorted open neighborhoods (self excluded).
    adjacency: Vec<Vec<usize>>,
    degrees: Vec<usize>,
    labels: Option<Arc<Vec<usize>>>,
}

impl<T: Scalar> PartialEq for Graph<T> {
    fn eq(&self, other: &Self) -> bool {
        self.edges == other.edges && self.features == other.features && self.labels == other.labels
    }
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph, canonicalizing orientation, dropping self-loops and
    /// deduplicating repeated edges.
    pub fn from_edge_list(
        features: Matrix<T>,
        edges: impl IntoIterator<Item = Edge>,
        labels: Option<Vec<usize>>,
    ) -> Result<(Self, IngestStats)> {
        let n = features.rows();
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Shape {
                    expected: format!("{n} labels"),
                    got: l.len().to_string(),
                });
            }
        }
        let mut stats = IngestStats::default();
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            for idx in [u, v] {
                if idx >= n {
                    return Err(Error::NodeOutOfRange {
                        index: idx,
                        n_nodes: n,
                    });
                }
            }
            if u == v {
                stats.self_loops_dropped += 1;
                continue;
            }
            if !set.insert(canonical(u, v)) {
                stats.duplicate_edges += 1;
            }
        }
        let g = Self::assemble(Arc::new(features), set, labels.map(Arc::new));
        Ok((g, stats))
    }

    pub fn new(
        features: Matrix<T>,
        edges: impl IntoIterator<Item = Edge>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        Self::from_edge_list(features, edges, labels).map(|(g, _)| g)
    }

    fn assemble(
        features: Arc<Matrix<T>>,
        edges: BTreeSet<Edge>,
        labels: Option<Arc<Vec<usize>>>,
    ) -> Self {
        let n = features.rows();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        let degrees = adjacency.iter().map(|a| a.len() + 1).collect();
        Graph {
            features,
            edges,
            adjacency,
            degrees,
            labels,
        }
    }

    /// Same nodes, features and labels over a different edge set.
    pub fn with_edges(&self, edges: BTreeSet<Edge>) -> Result<Self> {
        let n = self.n_nodes();
        for &(u, v) in &edges {
            if u >= v {
                return Err(if u == v {
                    Error::SelfLoop(u)
                } else {
                    Error::Config(format!("edge ({u}, {v}) is not canonical"))
                });
            }
            if v >= n {
                return Err(Error::NodeOutOfRange {
                    index: v,
                    n_nodes: n,
                });
            }
        }
        Ok(Self::assemble(
            self.features.clone(),
            edges,
            self.labels.clone(),
        ))
    }

    pub fn with_labels(&self, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.n_nodes() {
                return Err(Error::Shape {
                    expected: format!("{} labels", self.n_nodes()),
                    got: l.len().to_string(),
                });
            }
        }
        let mut g = self.clone();
        g.labels = labels.map(Arc::new);
        Ok(g)
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    /// Degrees of `Ã = A + I`, i.e. one more than the number of stored edges.
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref().map(Vec::as_slice)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.edges.contains(&canonical(u, v))
    }

    fn check_edge(&self, u: usize, v: usize) -> Result<Edge> {
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        let e = canonical(u, v);
        if !self.edges.contains(&e) {
            return Err(Error::MissingEdge { u: e.0, v: e.1 });
        }
        Ok(e)
    }

    /// Copy of the graph without edge `(u, v)`; `self` is untouched.
    pub fn remove_edge(&self, u: usize, v: usize) -> Result<Self> {
        let e = self.check_edge(u, v)?;
        let mut g = self.clone();
        g.edges.remove(&e);
        for (a, b) in [(e.0, e.1), (e.1, e.0)] {
            let pos = g.adjacency[a]
                .binary_search(&b)
                .expect("adjacency mirrors the edge set");
            g.adjacency[a].remove(pos);
            g.degrees[a] -= 1;
        }
        Ok(g)
    }

    /// Nodes whose aggregated feature row can change when `(u, v)` is deleted:
    /// the closed neighborhoods of both endpoints, sorted ascending.
    pub fn affected_nodes(&self, u: usize, v: usize) -> Result<Vec<usize>> {
        let (u, v) = self.check_edge(u, v)?;
        let mut s: BTreeSet<usize> = BTreeSet::new();
        s.insert(u);
        s.insert(v);
        s.extend(self.adjacency[u].iter().copied());
        s.extend(self.adjacency[v].iter().copied());
        Ok(s.into_iter().collect())
    }

    /// Writes row `k` of `D̃^{-1/2} Ã D̃^{-1/2} X` into `out`, summing the closed
    /// neighborhood in ascending node order.
    pub fn aggregate_row_into(&self, k: usize, out: &mut [T]) {
        let x = &*self.features;
        out.iter_mut().for_each(|o| *o = T::zero());
        let dk = T::of(self.degrees[k] as f64);
        let mut self_done = false;
        let mut add = |j: usize| {
            let w = T::one() / (dk * T::of(self.degrees[j] as f64)).sqrt();
            for (o, &xj) in out.iter_mut().zip(x.row(j)) {
                *o += w * xj;
            }
        };
        for &j in &self.adjacency[k] {
            if !self_done && j > k {
                add(k);
                self_done = true;
            }
            add(j);
        }
        if !self_done {
            add(k);
        }
    }
}

/// Row-normalized aggregated features `X̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFeatures<T> {
    pub matrix: Matrix<T>,
    pub pre_norm_row_norms: Vec<T>,
}

impl<T: Scalar> AggregatedFeatures<T> {
    pub fn n_nodes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_features(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.matrix.row(i)
    }

    /// Wraps rows that are already unit-norm (used by tests and the trainer).
    pub fn from_unit_rows(matrix: Matrix<T>) -> Result<Self> {
        let mut norms = Vec::with_capacity(matrix.rows());
        for i in 0..matrix.rows() {
            let n = norm2(matrix.row(i));
            if (n - T::one()).abs() > T::of(1e3) * T::epsilon() {
                return Err(Error::Config(format!("row {i} has norm {n}, expected 1")));
            }
            norms.push(n);
        }
        Ok(AggregatedFeatures {
            matrix,
            pre_norm_row_norms: norms,
        })
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let f = self.n_features();
        let mut data = Vec::with_capacity(rows.len() * f);
        for &r in rows {
            data.extend_from_slice(self.matrix.row(r));
        }
        AggregatedFeatures {
            matrix: Matrix::from_vec(rows.len(), f, data).expect("row sizes agree"),
            pre_norm_row_norms: rows.iter().map(|&r| self.pre_norm_row_norms[r]).collect(),
        }
    }
}

/// Computes one normalized aggregated row, returning its pre-normalization norm.
pub(crate) fn normalized_row<T: Scalar>(g: &Graph<T>, k: usize, out: &mut [T]) -> Result<T> {
    g.aggregate_row_into(k, out);
    let n = norm2(out);
    if !(n >= T::of(T::DEGENERATE_ROW_NORM)) {
        return Err(Error::DegenerateFeature {
            node: k,
            norm: n.to_f64_lossy(),
        });
    }
    for o in out.iter_mut() {
        *o /= n;
    }
    Ok(n)
}

/// `X̃`: symmetric-normalized aggregation followed by unit row normalization.
pub fn aggregate_features<T: Scalar>(g: &Graph<T>) -> Result<AggregatedFeatures<T>> {
    let (n, f) = (g.n_nodes(), g.n_features());
    let mut matrix = Matrix::zeros(n, f);
    let mut norms = Vec::with_capacity(n);
    for k in 0..n {
        norms.push(normalized_row(g, k, matrix.row_mut(k))?);
    }
    Ok(AggregatedFeatures {
        matrix,
        pre_norm_row_norms: norms,
    })
}
