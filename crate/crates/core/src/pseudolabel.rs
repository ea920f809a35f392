//! Model-independent pseudo labels: K-means over row-normalized `Ã·X`, and
//! the encodings that turn cluster ids into bounded real label vectors.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::rng::{self, Rng};
use crate::scalar::{norm2, Scalar};

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const CENTROID_SHIFT_TOL: f64 = 1e-6;
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels<T> {
    pub assignments: Vec<usize>,
    pub k: usize,
    pub inertia: T,
    pub seed: u64,
}

/// Clustering input: `Ã·X` (self-loops, no degree normalization) with unit rows.
/// Rows that aggregate to exactly zero stay zero.
pub fn clustering_input<T: Scalar>(g: &Graph<T>) -> Matrix<T> {
    let x = g.features();
    let mut h = Matrix::zeros(g.n_nodes(), g.n_features());
    for k in 0..g.n_nodes() {
        let out = h.row_mut(k);
        out.copy_from_slice(x.row(k));
        for &j in g.neighbors(k) {
            for (o, &v) in out.iter_mut().zip(x.row(j)) {
                *o += v;
            }
        }
        let n = norm2(out);
        if n > T::zero() {
            out.iter_mut().for_each(|o| *o /= n);
        }
    }
    h
}

pub fn kmeans_pseudo_labels<T: Scalar>(
    g: &Graph<T>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<PseudoLabels<T>> {
    kmeans(&clustering_input(g), k, seed, restarts)
}

/// Best-of-`restarts` Lloyd clustering with k-means++ seeding.
pub fn kmeans<T: Scalar>(
    data: &Matrix<T>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<PseudoLabels<T>> {
    let n = data.rows();
    if k == 0 || k > n {
        return Err(Error::InfeasibleK { k, n });
    }
    if restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    let distinct = count_distinct_rows(data);
    if distinct < k {
        return Err(Error::DegenerateClustering { k, distinct });
    }
    let runs: Vec<LloydRun<T>> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(data, k, &mut rng::stream(seed, r as u64)))
        .collect();
    // Ties go to the lowest restart index.
    let best = runs
        .into_iter()
        .reduce(|best, run| {
            if run.inertia < best.inertia {
                run
            } else {
                best
            }
        })
        .expect("at least one restart");
    Ok(PseudoLabels {
        assignments: best.assignments,
        k,
        inertia: best.inertia,
        seed,
    })
}

fn count_distinct_rows<T: Scalar>(data: &Matrix<T>) -> usize {
    let mut seen = HashSet::new();
    for i in 0..data.rows() {
        let key: Vec<u64> = data
            .row(i)
            .iter()
            .map(|v| {
                let f = v.to_f64_lossy();
                // +0.0 and -0.0 are the same point
                if f == 0.0 {
                    0
                } else {
                    f.to_bits()
                }
            })
            .collect();
        seen.insert(key);
    }
    seen.len()
}

/// One Lloyd run; `history` holds the inertia after every assignment step.
#[derive(Debug, Clone)]
pub struct LloydRun<T> {
    pub assignments: Vec<usize>,
    pub centroids: Matrix<T>,
    pub inertia: T,
    pub history: Vec<T>,
    pub iterations: usize,
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

fn plus_plus_seeds<T: Scalar>(data: &Matrix<T>, k: usize, rng: &mut Rng) -> Matrix<T> {
    let n = data.rows();
    let mut centroids = Matrix::zeros(k, data.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), centroids.row(0)).to_f64_lossy())
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // Rounding can run the scan off the end; fall back to the last
            // point with positive weight.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), centroids.row(c)).to_f64_lossy());
        }
    }
    centroids
}

fn assign<T: Scalar>(data: &Matrix<T>, centroids: &Matrix<T>, out: &mut [usize]) {
    for (i, a) in out.iter_mut().enumerate() {
        let x = data.row(i);
        let mut best = 0;
        let mut best_d = sq_dist(x, centroids.row(0));
        for c in 1..centroids.rows() {
            let d = sq_dist(x, centroids.row(c));
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        *a = best;
    }
}

/// Moves the farthest point of a multi-member cluster into each empty cluster.
fn repair_empty<T: Scalar>(data: &Matrix<T>, centroids: &mut Matrix<T>, assignments: &mut [usize]) {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = T::neg_infinity();
        for (i, &a) in assignments.iter().enumerate() {
            if sizes[a] > 1 {
                let d = sq_dist(data.row(i), centroids.row(a));
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let i = far.expect("k <= n guarantees a donor cluster");
        sizes[assignments[i]] -= 1;
        assignments[i] = c;
        sizes[c] = 1;
        centroids.row_mut(c).copy_from_slice(data.row(i));
    }
}

fn inertia<T: Scalar>(data: &Matrix<T>, centroids: &Matrix<T>, assignments: &[usize]) -> T {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(data.row(i), centroids.row(a)))
        .sum()
}

fn means<T: Scalar>(data: &Matrix<T>, k: usize, assignments: &[usize]) -> Matrix<T> {
    let mut sums = Matrix::zeros(k, data.cols());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, &x) in sums.row_mut(a).iter_mut().zip(data.row(i)) {
            *s += x;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        let inv = T::one() / T::of(cnt.max(1) as f64);
        sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
    }
    sums
}

pub fn lloyd<T: Scalar>(data: &Matrix<T>, k: usize, rng: &mut Rng) -> LloydRun<T> {
    let n = data.rows();
    let mut centroids = plus_plus_seeds(data, k, rng);
    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();
    let tol = T::of(CENTROID_SHIFT_TOL);
    let mut iterations = 0;
    for _ in 0..MAX_LLOYD_ITERATIONS {
        iterations += 1;
        assign(data, &centroids, &mut assignments);
        repair_empty(data, &mut centroids, &mut assignments);
        history.push(inertia(data, &centroids, &assignments));
        let next = means(data, k, &assignments);
        let shift = (0..k)
            .map(|c| sq_dist(next.row(c), centroids.row(c)).sqrt())
            .fold(T::zero(), T::max);
        centroids = next;
        if shift < tol {
            break;
        }
    }
    assign(data, &centroids, &mut assignments);
    repair_empty(data, &mut centroids, &mut assignments);
    let centroids = means(data, k, &assignments);
    let final_inertia = inertia(data, &centroids, &assignments);
    history.push(final_inertia);
    LloydRun {
        assignments,
        centroids,
        inertia: final_inertia,
        history,
        iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Encoding {
    OneHot,
    SignedBinary,
    ScalarTruth,
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::OneHot => "one-hot",
            Encoding::SignedBinary => "signed-binary",
            Encoding::ScalarTruth => "scalar-truth",
        })
    }
}

impl FromStr for Encoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-hot" => Ok(Encoding::OneHot),
            "signed-binary" => Ok(Encoding::SignedBinary),
            "scalar-truth" => Ok(Encoding::ScalarTruth),
            other => Err(Error::Config(format!("unknown encoding {other:?}"))),
        }
    }
}

/// Where label values come from.
#[derive(Debug, Clone, Copy)]
pub enum LabelSource<'a, T> {
    /// Integer class ids in `0..k`.
    Classes { assignments: &'a [usize], k: usize },
    /// Real-valued ground truth.
    Real(&'a [T]),
}

impl<'a, T> LabelSource<'a, T> {
    pub fn from_pseudo(p: &'a PseudoLabels<T>) -> Self {
        LabelSource::Classes {
            assignments: &p.assignments,
            k: p.k,
        }
    }

    /// Class ids with `k` inferred as `max + 1`.
    pub fn from_classes(assignments: &'a [usize]) -> Self {
        let k = assignments.iter().max().map_or(0, |m| m + 1);
        LabelSource::Classes { assignments, k }
    }
}

/// Label channels consumed by the kernel complexity functional.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix<T> {
    pub columns: Vec<Vec<T>>,
    pub encoding: Encoding,
}

impl<T: Scalar> LabelMatrix<T> {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// SHA-256 over the encoding tag and the little-endian `f64` entries.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.encoding.to_string().as_bytes());
        h.update((self.columns.len() as u64).to_le_bytes());
        for c in &self.columns {
            for v in c {
                h.update(v.to_f64_lossy().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Rows permuted so that new row `i` is old row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        LabelMatrix {
            columns: self
                .columns
                .iter()
                .map(|c| perm.iter().map(|&p| c[p]).collect())
                .collect(),
            encoding: self.encoding,
        }
    }
}

pub fn encode_labels<T: Scalar>(
    source: LabelSource<'_, T>,
    mode: Encoding,
) -> Result<LabelMatrix<T>> {
    let columns = match (source, mode) {
        (LabelSource::Classes { assignments, k }, Encoding::OneHot) => {
            check_classes(assignments, k)?;
            (0..k)
                .map(|c| {
                    assignments
                        .iter()
                        .map(|&a| if a == c { T::one() } else { T::zero() })
                        .collect()
                })
                .collect()
        }
        (LabelSource::Classes { assignments, k }, Encoding::SignedBinary) => {
            if k != 2 {
                return Err(Error::Encoding(format!(
                    "signed-binary needs exactly 2 classes, got {k}"
                )));
            }
            check_classes(assignments, k)?;
            vec![assignments
                .iter()
                .map(|&a| if a == 0 { T::one() } else { -T::one() })
                .collect()]
        }
        (LabelSource::Classes { assignments, k }, Encoding::ScalarTruth) => {
            check_classes(assignments, k)?;
            let col: Vec<T> = assignments.iter().map(|&a| T::of(a as f64)).collect();
            check_bounded(&col)?;
            vec![col]
        }
        (LabelSource::Real(y), Encoding::ScalarTruth) => {
            check_bounded(y)?;
            vec![y.to_vec()]
        }
        (LabelSource::Real(_), m) => {
            return Err(Error::Encoding(format!(
                "{m} encoding needs class ids, not real labels"
            )))
        }
    };
    Ok(LabelMatrix {
        columns,
        encoding: mode,
    })
}

fn check_classes(assignments: &[usize], k: usize) -> Result<()> {
    if let Some((node, &a)) = assignments.iter().enumerate().find(|(_, &a)| a >= k) {
        return Err(Error::Encoding(format!(
            "node {node} has class {a}, outside 0..{k}"
        )));
    }
    Ok(())
}

fn check_bounded<T: Scalar>(y: &[T]) -> Result<()> {
    for (node, &v) in y.iter().enumerate() {
        if !(v.abs() <= T::one()) {
            return Err(Error::UnboundedLabel {
                node,
                value: v.to_f64_lossy(),
            });
        }
    }
    Ok(())
}
