//! Per-edge kernel complexity scores: `KC(u, v) = |GKC(H) − GKC(H₋₍ᵤ,ᵥ₎)|`.
//!
//! Two routes compute the same quantity:
//!
//! * **naive** rebuilds the aggregated features, Gram matrix and GKC of the
//!   edge-deleted graph from scratch;
//! * **fast** uses that deleting `(u, v)` only changes the aggregated rows in
//!   `S = N[u] ∪ N[v]`. The Gram perturbation `ΔH` is then supported on the rows
//!   and columns of `S` and factors as `ΔH = U C Uᵀ` with `U = [E_S, M]`,
//!   `M = ΔH[:, S] − ½ E_S ΔH[S, S]` and `C = [[0, I], [I, 0]]`. The Woodbury
//!   identity gives
//!
//!   `yᵀ H'⁻¹ y = yᵀ H⁻¹ y − bᵀ K⁻¹ b`, `b = Uᵀ H⁻¹ y`, `K = C + Uᵀ H⁻¹ U`,
//!
//!   so only a `2|S| × 2|S|` capacitance system is solved per edge. By Haynsworth
//!   inertia additivity `H'` is positive definite exactly when `K` has `|S|`
//!   negative and `|S|` positive eigenvalues; any other inertia, a poorly
//!   conditioned `K`, or a ridged base matrix sends the edge to the naive route.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{aggregate_features, normalized_row, AggregatedFeatures, Edge, Graph};
use crate::kernel::{gkc, gram_matrix, kernel_entry, solve_spd, GkcValue, GramMatrix};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::pseudolabel::LabelMatrix;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Naive,
    Fast,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Naive => "naive",
            Method::Fast => "fast",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Method::Naive),
            "fast" => Ok(Method::Fast),
            other => Err(Error::Config(format!("unknown scoring method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KcEntry<T> {
    pub score: T,
    pub gkc_removed: T,
    /// Route that actually produced the value (fast-path fallbacks report `Naive`).
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KcScoreTable<T> {
    pub entries: BTreeMap<Edge, KcEntry<T>>,
    pub base_gkc: T,
    pub label_digest: String,
    /// Edges the fast route handed to the naive route.
    pub fast_fallbacks: usize,
}

impl<T: Scalar> KcScoreTable<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score(&self, u: usize, v: usize) -> Option<T> {
        self.entries
            .get(&crate::graph::canonical(u, v))
            .map(|e| e.score)
    }

    /// `(edge, score)` in canonical edge order.
    pub fn scores(&self) -> Vec<(Edge, T)> {
        self.entries.iter().map(|(&e, k)| (e, k.score)).collect()
    }

    /// Entries by score descending, ties by `(u, v)` ascending.
    pub fn ranked(&self) -> Vec<(Edge, KcEntry<T>)> {
        let mut v: Vec<(Edge, KcEntry<T>)> = self.entries.iter().map(|(&e, &k)| (e, k)).collect();
        v.sort_by(|a, b| rank_order((a.0, a.1.score), (b.0, b.1.score)));
        v
    }

    /// TSV export: `u<TAB>v<TAB>kc_score<TAB>method`, ranked.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for ((u, v), e) in self.ranked() {
            let _ = writeln!(s, "{u}\t{v}\t{}\t{}", e.score, e.method);
        }
        s
    }
}

/// Score descending, then edge ascending.
pub(crate) fn rank_order<T: Scalar>(a: (Edge, T), b: (Edge, T)) -> std::cmp::Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// One parsed line of a score TSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord<T> {
    pub edge: Edge,
    pub score: T,
    pub method: Method,
}

pub fn parse_scores_tsv<T: Scalar>(text: &str) -> Result<Vec<ScoreRecord<T>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            path: "<scores>".into(),
            line: i + 1,
            message: m.to_string(),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 tab-separated columns"));
        }
        let u: usize = cols[0].parse().map_err(|_| bad("invalid u"))?;
        let v: usize = cols[1].parse().map_err(|_| bad("invalid v"))?;
        let score: T = cols[2].parse().map_err(|_| bad("invalid score"))?;
        let method: Method = cols[3].parse().map_err(|_| bad("invalid method"))?;
        out.push(ScoreRecord {
            edge: crate::graph::canonical(u, v),
            score,
            method,
        });
    }
    Ok(out)
}

/// Aggregated features, Gram matrix and GKC of one graph.
#[derive(Debug)]
pub struct GkcState<T> {
    pub features: AggregatedFeatures<T>,
    pub gram: GramMatrix<T>,
    pub gkc: GkcValue<T>,
}

pub fn gkc_state<T: Scalar>(g: &Graph<T>, labels: &LabelMatrix<T>) -> Result<GkcState<T>> {
    check_labels(g, labels)?;
    let features = aggregate_features(g)?;
    let gram = gram_matrix(&features)?;
    let gkc = gkc(&gram, labels)?;
    Ok(GkcState {
        features,
        gram,
        gkc,
    })
}

fn check_labels<T: Scalar>(g: &Graph<T>, labels: &LabelMatrix<T>) -> Result<()> {
    if labels.n_rows() != g.n_nodes() || labels.columns.is_empty() {
        return Err(Error::Shape {
            expected: format!("label matrix with {} rows", g.n_nodes()),
            got: format!(
                "{} rows x {} columns",
                labels.n_rows(),
                labels.columns.len()
            ),
        });
    }
    Ok(())
}

/// GKC of `g` with `(u, v)` deleted, recomputed from scratch.
pub fn gkc_without_edge<T: Scalar>(
    g: &Graph<T>,
    labels: &LabelMatrix<T>,
    u: usize,
    v: usize,
) -> Result<T> {
    let inner = || -> Result<T> {
        let h = g.remove_edge(u, v)?;
        Ok(gkc_state(&h, labels)?.gkc.value)
    };
    inner().map_err(|e| e.at_edge(u.min(v), u.max(v)))
}

/// Full-recompute KC score of one edge.
pub fn kc_score_naive<T: Scalar>(
    g: &Graph<T>,
    labels: &LabelMatrix<T>,
    u: usize,
    v: usize,
) -> Result<T> {
    let base = gkc_state(g, labels)?.gkc.value;
    let removed = gkc_without_edge(g, labels, u, v)?;
    Ok((base - removed).abs())
}

/// Why the fast route declined an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    BaseRidged,
    /// `2|S| ≥ N`: the update is not low rank.
    FullRank,
    /// The edge-deleted Gram matrix is not positive definite.
    Inertia,
    IllConditioned,
}

/// Cached state for low-rank edge deletion updates of one base graph.
#[derive(Debug)]
pub struct FastScorer<T> {
    graph: Graph<T>,
    labels: LabelMatrix<T>,
    state: GkcState<T>,
    /// Explicit `H⁻¹` (empty when the base is ridged).
    inverse: Matrix<T>,
    /// `H⁻¹ y_c` per label channel.
    solved: Vec<Vec<T>>,
    fallbacks: AtomicUsize,
}

impl<T: Scalar> FastScorer<T> {
    pub fn new(g: &Graph<T>, labels: &LabelMatrix<T>) -> Result<Self> {
        let state = gkc_state(g, labels)?;
        let (inverse, solved) = if state.gram.ridge_used() {
            (Matrix::zeros(0, 0), vec![])
        } else {
            let solved = labels
                .columns
                .iter()
                .map(|y| solve_spd(&state.gram, y))
                .collect::<Result<Vec<_>>>()?;
            (state.gram.factor().inverse(), solved)
        };
        Ok(FastScorer {
            graph: g.clone(),
            labels: labels.clone(),
            state,
            inverse,
            solved,
            fallbacks: AtomicUsize::new(0),
        })
    }

    pub fn base(&self) -> &GkcState<T> {
        &self.state
    }

    pub fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    pub fn fallbacks(&self) -> usize {
        self.fallbacks.load(Ordering::Relaxed)
    }

    /// GKC change `GKC(H) − GKC(H')` from the low-rank update, or the reason the
    /// update was not trusted.
    pub fn try_delta(&self, u: usize, v: usize) -> Result<std::result::Result<T, Fallback>> {
        let g = &self.graph;
        let n = g.n_nodes();
        let s_nodes = g.affected_nodes(u, v)?;
        if self.state.gram.ridge_used() {
            return Ok(Err(Fallback::BaseRidged));
        }
        let s = s_nodes.len();
        if 2 * s >= n {
            return Ok(Err(Fallback::FullRank));
        }

        let modified = g.remove_edge(u, v)?;
        let f = g.n_features();
        let mut new_rows = Matrix::zeros(s, f);
        for (a, &k) in s_nodes.iter().enumerate() {
            normalized_row(&modified, k, new_rows.row_mut(a))?;
        }

        // position of each node inside S, if any
        let mut pos_in_s = vec![usize::MAX; n];
        for (a, &k) in s_nodes.iter().enumerate() {
            pos_in_s[k] = a;
        }

        let h = self.state.gram.h();
        let xt = &self.state.features.matrix;
        let half = T::of(0.5);
        // Mᵀ, stored s × N so every later product streams contiguous rows.
        let mut mt = Matrix::zeros(s, n);
        for (b, &j) in s_nodes.iter().enumerate() {
            let xj = new_rows.row(b);
            let row = mt.row_mut(b);
            for q in 0..n {
                let a = pos_in_s[q];
                let new = if a == usize::MAX {
                    kernel_entry(dot(xt.row(q), xj))
                } else if a == b {
                    half
                } else {
                    kernel_entry(dot(new_rows.row(a), xj))
                };
                let delta = new - h[(q, j)];
                row[q] = if a == usize::MAX { delta } else { half * delta };
            }
        }

        // Wᵀ = Mᵀ H⁻¹ (H⁻¹ is symmetric).
        let inv = &self.inverse;
        let mut wt = Matrix::zeros(s, n);
        for b in 0..s {
            let m_row = mt.row(b);
            let w_row = wt.row_mut(b);
            for (q, &mq) in m_row.iter().enumerate() {
                if mq == T::zero() {
                    continue;
                }
                for (w, &gq) in w_row.iter_mut().zip(inv.row(q)) {
                    *w += mq * gq;
                }
            }
        }

        let mut k = Matrix::zeros(2 * s, 2 * s);
        for a in 0..s {
            for b in 0..s {
                k[(a, b)] = inv[(s_nodes[a], s_nodes[b])];
                // Eᵀ H⁻¹ M
                let em = wt[(b, s_nodes[a])];
                k[(a, s + b)] = em;
                k[(s + b, a)] = em;
            }
            k[(a, s + a)] += T::one();
            k[(s + a, a)] += T::one();
        }
        for a in 0..s {
            for b in a..s {
                let mm = (dot(mt.row(a), wt.row(b)) + dot(mt.row(b), wt.row(a))) * half;
                k[(s + a, s + b)] = mm;
                k[(s + b, s + a)] = mm;
            }
        }
        // Symmetrize the H⁻¹ block against rounding in the cached inverse.
        for a in 0..s {
            for b in (a + 1)..s {
                let avg = (k[(a, b)] + k[(b, a)]) * half;
                k[(a, b)] = avg;
                k[(b, a)] = avg;
            }
        }

        let eig = SymmetricEigen::new(&k)?;
        let negatives = eig.eigenvalues.iter().filter(|&&l| l < T::zero()).count();
        let smallest = eig
            .eigenvalues
            .iter()
            .fold(T::infinity(), |m, &l| m.min(l.abs()));
        let largest = eig
            .eigenvalues
            .iter()
            .fold(T::zero(), |m, &l| m.max(l.abs()));
        if negatives != s || smallest == T::zero() {
            return Ok(Err(Fallback::Inertia));
        }
        if !(largest / smallest <= T::of(T::MAX_CAPACITANCE_COND)) {
            return Ok(Err(Fallback::IllConditioned));
        }

        let scale = T::of(2.0) / T::of(n as f64);
        let mut total = T::zero();
        for z in &self.solved {
            let mut b_vec = Vec::with_capacity(2 * s);
            b_vec.extend(s_nodes.iter().map(|&j| z[j]));
            b_vec.extend((0..s).map(|a| dot(mt.row(a), z)));
            let mut quad = T::zero();
            for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
                let mut proj = T::zero();
                for (r, &bv) in b_vec.iter().enumerate() {
                    proj += eig.eigenvectors[(r, c)] * bv;
                }
                quad += proj * proj / lambda;
            }
            total += quad;
        }
        Ok(Ok(scale * total))
    }

    /// Table entry for one edge, falling back to the naive route when needed.
    pub fn entry(&self, u: usize, v: usize) -> Result<KcEntry<T>> {
        let base = self.state.gkc.value;
        match self
            .try_delta(u, v)
            .map_err(|e| e.at_edge(u.min(v), u.max(v)))?
        {
            Ok(delta) => Ok(KcEntry {
                score: delta.abs(),
                gkc_removed: base - delta,
                method: Method::Fast,
            }),
            Err(reason) => {
                log::debug!("edge ({u}, {v}) falls back to naive scoring: {reason:?}");
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
                let removed = gkc_without_edge(&self.graph, &self.labels, u, v)?;
                Ok(KcEntry {
                    score: (base - removed).abs(),
                    gkc_removed: removed,
                    method: Method::Naive,
                })
            }
        }
    }
}

/// Low-rank KC score of one edge against a prepared cache.
pub fn kc_score_fast<T: Scalar>(cache: &FastScorer<T>, u: usize, v: usize) -> Result<T> {
    cache.entry(u, v).map(|e| e.score)
}

/// Scores every edge of `g`.
pub fn kc_scores_all<T: Scalar>(
    g: &Graph<T>,
    labels: &LabelMatrix<T>,
    method: Method,
) -> Result<KcScoreTable<T>> {
    if g.n_edges() == 0 {
        return Err(Error::NoEdges);
    }
    let edges: Vec<Edge> = g.edges().iter().copied().collect();
    kc_scores_for(g, labels, &edges, method)
}

/// Scores the listed edges of `g`.
pub fn kc_scores_for<T: Scalar>(
    g: &Graph<T>,
    labels: &LabelMatrix<T>,
    edges: &[Edge],
    method: Method,
) -> Result<KcScoreTable<T>> {
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    let (base, results, fallbacks): (T, Vec<Result<KcEntry<T>>>, usize) = match method {
        Method::Naive => {
            let base = gkc_state(g, labels)?.gkc.value;
            let results = edges
                .par_iter()
                .map(|&(u, v)| {
                    gkc_without_edge(g, labels, u, v).map(|removed| KcEntry {
                        score: (base - removed).abs(),
                        gkc_removed: removed,
                        method: Method::Naive,
                    })
                })
                .collect();
            (base, results, 0)
        }
        Method::Fast => {
            let scorer = FastScorer::new(g, labels)?;
            let results = edges.par_iter().map(|&(u, v)| scorer.entry(u, v)).collect();
            (scorer.state.gkc.value, results, scorer.fallbacks())
        }
    };
    let mut entries = BTreeMap::new();
    for (&e, r) in edges.iter().zip(results) {
        entries.insert(e, r?);
    }
    Ok(KcScoreTable {
        entries,
        base_gkc: base,
        label_digest: labels.digest(),
        fast_fallbacks: fallbacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudolabel::{encode_labels, Encoding, LabelSource};

    fn feats(n: usize, f: usize, seed: u64) -> Matrix<f64> {
        use rand_distr::{Distribution, Normal};
        let mut r = crate::rng::seeded(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        Matrix::from_fn(n, f, |_, _| d.sample(&mut r))
    }

    fn one_hot(classes: &[usize]) -> LabelMatrix<f64> {
        encode_labels(LabelSource::from_classes(classes), Encoding::OneHot).unwrap()
    }

    #[test]
    fn symmetric_in_endpoints() {
        let g = Graph::new(
            feats(6, 4, 1),
            [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)],
            None,
        )
        .unwrap();
        let y = one_hot(&[0, 0, 1, 1, 0, 1]);
        let a = kc_score_naive(&g, &y, 2, 3).unwrap();
        let b = kc_score_naive(&g, &y, 3, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unchanged_features_score_zero() {
        // Both endpoints carry the same feature, so X̃ is the same with or
        // without the edge.
        let x = Matrix::from_rows(&vec![vec![1.0, 2.0]; 2]).unwrap();
        let g = Graph::new(x, [(0, 1)], None).unwrap();
        let y = one_hot(&[0, 1]);
        // The Gram matrix is singular here (identical rows), so both GKCs go through
        // the same ridge and the difference is exactly zero.
        assert_eq!(kc_score_naive(&g, &y, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn fast_matches_naive_on_small_graph() {
        let edges = [
            (0, 1),
            (1, 2),
            (2, 3),
            (3, 4),
            (4, 5),
            (5, 6),
            (6, 7),
            (0, 4),
            (2, 6),
            (8, 9),
            (9, 10),
            (10, 11),
            (1, 9),
        ];
        let g = Graph::new(feats(12, 8, 3), edges, None).unwrap();
        let y = one_hot(&[0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2]);
        let naive = kc_scores_all(&g, &y, Method::Naive).unwrap();
        let fast = kc_scores_all(&g, &y, Method::Fast).unwrap();
        assert_eq!(naive.base_gkc, fast.base_gkc);
        for (e, n) in &naive.entries {
            let f = fast.entries[e];
            let tol = (1e-8 * n.score.abs()).max(1e-12);
            assert!(
                (f.score - n.score).abs() <= tol,
                "{e:?}: {} vs {}",
                f.score,
                n.score
            );
        }
        assert!(fast.entries.values().any(|e| e.method == Method::Fast));
    }

    #[test]
    fn no_edges_is_an_error() {
        let g = Graph::new(feats(3, 3, 1), [], None).unwrap();
        let y = one_hot(&[0, 1, 0]);
        assert!(matches!(
            kc_scores_all(&g, &y, Method::Fast),
            Err(Error::NoEdges)
        ));
    }

    #[test]
    fn tsv_round_trip_and_order() {
        let mut entries = BTreeMap::new();
        for (e, s) in [((0, 1), 0.5), ((0, 2), 0.25), ((1, 2), 0.5)] {
            entries.insert(
                e,
                KcEntry {
                    score: s,
                    gkc_removed: 1.0,
                    method: Method::Naive,
                },
            );
        }
        let t = KcScoreTable {
            entries,
            base_gkc: 1.0,
            label_digest: String::new(),
            fast_fallbacks: 0,
        };
        let tsv = t.to_tsv();
        assert_eq!(
            tsv,
            "0\t1\t0.5\tnaive\n1\t2\t0.5\tnaive\n0\t2\t0.25\tnaive\n"
        );
        let back: Vec<ScoreRecord<f64>> = parse_scores_tsv(&tsv).unwrap();
        assert_eq!(back[2].edge, (0, 2));
        assert_eq!(back[2].score, 0.25);
    }
}
