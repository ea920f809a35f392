#![allow(dead_code, clippy::needless_range_loop)]

use std::f64::consts::PI;

use kces::pseudolabel::{encode_labels, LabelSource};
use kces::{Encoding, Graph, LabelMatrix, Matrix};
use rand::Rng as _;
use rand_distr::StandardNormal;

/// Erdős–Rényi edges over Gaussian features.
pub fn random_graph(n: usize, f: usize, p: f64, seed: u64) -> Graph {
    let mut r = kces::rng::seeded(seed);
    let x = Matrix::from_fn(n, f, |_, _| r.sample(StandardNormal));
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(x, edges, None).unwrap()
}

/// Graph with exactly `m` distinct random edges.
pub fn random_graph_m(n: usize, f: usize, m: usize, seed: u64) -> Graph {
    let mut r = kces::rng::seeded(seed);
    let x = Matrix::from_fn(n, f, |_, _| r.sample(StandardNormal));
    let mut edges = std::collections::BTreeSet::new();
    while edges.len() < m {
        let u = r.random_range(0..n);
        let v = r.random_range(0..n);
        if u != v {
            edges.insert(kces::canonical(u, v));
        }
    }
    Graph::new(x, edges, None).unwrap()
}

pub fn random_classes(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut r = kces::rng::seeded(seed ^ 0x5eed);
    let mut c: Vec<usize> = (0..n).map(|i| i % k).collect();
    for i in (1..n).rev() {
        c.swap(i, r.random_range(0..=i));
    }
    c
}

pub fn one_hot(classes: &[usize]) -> LabelMatrix {
    encode_labels(LabelSource::from_classes(classes), Encoding::OneHot).unwrap()
}

pub fn rel_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs)
}

// ---- independent dense reference, no library code below this line ----

/// Symmetric-normalized aggregation with self-loops, rows scaled to unit norm.
pub fn dense_aggregate(x: &[Vec<f64>], edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &(u, v) in edges {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let f = x[0].len();
    let mut out = vec![vec![0.0; f]; n];
    for i in 0..n {
        for j in 0..n {
            let w = a[i][j] / (d[i] * d[j]).sqrt();
            for c in 0..f {
                out[i][c] += w * x[j][c];
            }
        }
        let norm = out[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        out[i].iter_mut().for_each(|v| *v /= norm);
    }
    out
}

pub fn dense_gram(xt: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = xt.len();
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let d: f64 = xt[i].iter().zip(&xt[j]).map(|(a, b)| a * b).sum();
            let d = d.clamp(-1.0, 1.0);
            h[i][j] = if i == j {
                0.5
            } else {
                d * (PI - d.acos()) / (2.0 * PI)
            };
        }
    }
    h
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())
            .unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        assert!(piv.abs() > 1e-300, "singular matrix");
        m[c].iter_mut().for_each(|v| *v /= piv);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn dense_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `Σ_c 2 y_cᵀ H⁻¹ y_c / N` through an explicit inverse.
pub fn dense_gkc(h: &[Vec<f64>], columns: &[Vec<f64>]) -> f64 {
    let inv = dense_inverse(h);
    let n = h.len() as f64;
    columns
        .iter()
        .map(|y| {
            let z = dense_matvec(&inv, y);
            2.0 * y.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / n
        })
        .sum()
}

pub fn dense_graph_gkc(g: &Graph, labels: &LabelMatrix) -> f64 {
    let x: Vec<Vec<f64>> = (0..g.n_nodes())
        .map(|i| g.features().row(i).to_vec())
        .collect();
    let edges: Vec<(usize, usize)> = g.edges().iter().copied().collect();
    dense_gkc(&dense_gram(&dense_aggregate(&x, &edges)), &labels.columns)
}

/// Symmetric Jacobi eigenvalues, ascending.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}
