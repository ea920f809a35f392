//! Stochastic block model graphs with class-conditional Gaussian features.

use std::collections::BTreeSet;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::{norm2, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmConfig {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub n_features: usize,
    /// Norm of each class mean.
    pub signal: f64,
    /// Per-coordinate standard deviation around the class mean.
    pub noise: f64,
    pub seed: u64,
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_classes == 0 || self.n_classes > self.n_nodes {
            return Err(Error::Config(format!(
                "{} classes for {} nodes",
                self.n_classes, self.n_nodes
            )));
        }
        if !prob(self.p_in) || !prob(self.p_out) {
            return Err(Error::Config(
                "edge probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.n_features == 0 || !(self.noise >= 0.0) || !(self.signal >= 0.0) {
            return Err(Error::Config(
                "feature model needs F >= 1 and nonnegative scales".into(),
            ));
        }
        Ok(())
    }
}

/// Node `i` belongs to class `i·K/N`; every pair is an edge independently
/// with `p_in` inside a class and `p_out` across.
pub fn sbm<T: Scalar>(cfg: &SbmConfig) -> Result<Graph<T>> {
    cfg.validate()?;
    let n = cfg.n_nodes;
    let f = cfg.n_features;
    let labels: Vec<usize> = (0..n).map(|i| i * cfg.n_classes / n).collect();
    let mut edge_rng = rng::stream(cfg.seed, 0);
    let mut edges = BTreeSet::<Edge>::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if edge_rng.random::<f64>() < p {
                edges.insert((u, v));
            }
        }
    }

    let mut feat_rng = rng::stream(cfg.seed, 1);
    let means: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| {
            let mut d: Vec<f64> = (0..f).map(|_| feat_rng.sample(StandardNormal)).collect();
            let s = norm2(&d);
            d.iter_mut().for_each(|x| *x *= cfg.signal / s);
            d
        })
        .collect();
    let mut x = Matrix::zeros(n, f);
    for i in 0..n {
        let mu = &means[labels[i]];
        for (j, slot) in x.row_mut(i).iter_mut().enumerate() {
            let z: f64 = feat_rng.sample(StandardNormal);
            *slot = T::of(mu[j] + cfg.noise * z);
        }
    }
    Graph::new(x, edges, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> SbmConfig {
        SbmConfig {
            n_nodes: 200,
            n_classes: 2,
            p_in: 0.1,
            p_out: 0.01,
            n_features: 16,
            signal: 1.0,
            noise: 0.5,
            seed,
        }
    }

    #[test]
    fn seeded_and_labelled() {
        let a: Graph<f64> = sbm(&cfg(3)).unwrap();
        assert_eq!(a, sbm(&cfg(3)).unwrap());
        assert_ne!(a, sbm(&cfg(4)).unwrap());
        let labels = a.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&c| c == 0).count(), 100);
    }

    #[test]
    fn block_densities() {
        let g: Graph<f64> = sbm(&cfg(1)).unwrap();
        let labels = g.labels().unwrap();
        let intra = g
            .edges()
            .iter()
            .filter(|&&(u, v)| labels[u] == labels[v])
            .count();
        let cross = g.n_edges() - intra;
        // 2·C(100, 2) = 9900 intra pairs, 10000 cross pairs
        let p_in = intra as f64 / 9900.0;
        let p_out = cross as f64 / 10000.0;
        assert!((p_in - 0.1).abs() < 0.02, "{p_in}");
        assert!((p_out - 0.01).abs() < 0.005, "{p_out}");
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = cfg(0);
        c.p_in = 1.5;
        assert!(sbm::<f64>(&c).is_err());
        c = cfg(0);
        c.n_classes = 0;
        assert!(sbm::<f64>(&c).is_err());
    }
}
