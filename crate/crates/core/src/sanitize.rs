//! Edge selection by KC rank and the end-to-end sanitization pipeline.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::io::format_edges;
use crate::kc_score::{kc_scores_all, rank_order, KcScoreTable, Method};
use crate::pseudolabel::{
    encode_labels, kmeans_pseudo_labels, Encoding, LabelSource, PseudoLabels, DEFAULT_RESTARTS,
};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    HighKc,
    LowKc,
    Random { seed: u64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::HighKc => "high-kc",
            Strategy::LowKc => "low-kc",
            Strategy::Random { .. } => "random",
        }
    }

    /// Parses `high-kc`, `low-kc` or `random`; the seed is only kept for `random`.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        match name {
            "high-kc" => Ok(Strategy::HighKc),
            "low-kc" => Ok(Strategy::LowKc),
            "random" => Ok(Strategy::Random { seed }),
            other => Err(Error::Config(format!("unknown pruning strategy {other:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub alpha: f64,
    pub strategy: Strategy,
}

impl PruneConfig {
    pub fn new(alpha: f64, strategy: Strategy) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "pruning ratio {alpha} outside [0, 1]"
            )));
        }
        Ok(PruneConfig { alpha, strategy })
    }
}

/// `⌈α·|E|⌉`. Products within rounding noise of an integer are not bumped up
/// (`0.1 · 30` is 3, not 4).
pub fn prune_count(alpha: f64, n_edges: usize) -> usize {
    let x = alpha * n_edges as f64;
    let k = (x - 1e-9 * x.max(1.0)).ceil().max(0.0) as usize;
    k.min(n_edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunePlan {
    pub removed: Vec<Edge>,
    pub k: usize,
    pub config: PruneConfig,
}

impl PrunePlan {
    pub fn to_tsv(&self) -> String {
        format_edges(&self.removed)
    }
}

/// Selects edges from `(edge, score)` pairs.
pub fn select_ranked<T: Scalar>(scores: &[(Edge, T)], config: &PruneConfig) -> Result<PrunePlan> {
    let config = PruneConfig::new(config.alpha, config.strategy)?;
    let mut seen = BTreeSet::new();
    for &(e, _) in scores {
        if e.0 >= e.1 {
            return Err(Error::Config(format!("edge {e:?} is not canonical")));
        }
        if !seen.insert(e) {
            return Err(Error::Config(format!("edge {e:?} scored twice")));
        }
    }
    if scores.is_empty() && config.alpha > 0.0 {
        return Err(Error::NoEdges);
    }
    let k = prune_count(config.alpha, scores.len());
    let removed = match config.strategy {
        Strategy::HighKc => {
            let mut v = scores.to_vec();
            v.sort_by(|a, b| rank_order(*a, *b));
            v.into_iter().take(k).map(|(e, _)| e).collect()
        }
        Strategy::LowKc => {
            let mut v = scores.to_vec();
            v.sort_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            v.into_iter().take(k).map(|(e, _)| e).collect()
        }
        Strategy::Random { seed } => {
            // Sample from the canonical order so the input order is irrelevant.
            let pool: Vec<Edge> = seen.iter().copied().collect();
            let mut picked: Vec<Edge> = index::sample(&mut rng::seeded(seed), pool.len(), k)
                .into_iter()
                .map(|i| pool[i])
                .collect();
            picked.sort_unstable();
            picked
        }
    };
    Ok(PrunePlan { removed, k, config })
}

pub fn select_edges<T: Scalar>(table: &KcScoreTable<T>, config: &PruneConfig) -> Result<PrunePlan> {
    select_ranked(&table.scores(), config)
}

/// `E' = E \ plan.removed`.
pub fn apply_prune<T: Scalar>(g: &Graph<T>, plan: &PrunePlan) -> Result<Graph<T>> {
    let mut edges = g.edges().clone();
    for &(u, v) in &plan.removed {
        if !edges.remove(&(u, v)) {
            return Err(Error::StalePlan { u, v });
        }
    }
    g.with_edges(edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub k_clusters: usize,
    pub seed: u64,
    pub method: Method,
    pub restarts: usize,
    pub encoding: Encoding,
}

impl PipelineConfig {
    pub fn new(alpha: f64, k_clusters: usize, seed: u64, method: Method) -> Self {
        PipelineConfig {
            alpha,
            k_clusters,
            seed,
            method,
            restarts: DEFAULT_RESTARTS,
            encoding: Encoding::OneHot,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KcesOutput<T> {
    pub graph: Graph<T>,
    pub table: KcScoreTable<T>,
    pub plan: PrunePlan,
    pub pseudo_labels: PseudoLabels<T>,
}

/// Pseudo labels, KC scores of every edge, then high-KC pruning at `alpha`.
pub fn kces_pipeline<T: Scalar>(
    g: &Graph<T>,
    alpha: f64,
    k_clusters: usize,
    seed: u64,
    method: Method,
) -> Result<KcesOutput<T>> {
    kces_pipeline_with(g, &PipelineConfig::new(alpha, k_clusters, seed, method))
}

pub fn kces_pipeline_with<T: Scalar>(g: &Graph<T>, cfg: &PipelineConfig) -> Result<KcesOutput<T>> {
    let prune = PruneConfig::new(cfg.alpha, Strategy::HighKc)?;
    let pseudo = kmeans_pseudo_labels(g, cfg.k_clusters, cfg.seed, cfg.restarts)?;
    let labels = encode_labels(LabelSource::from_pseudo(&pseudo), cfg.encoding)?;
    let table = kc_scores_all(g, &labels, cfg.method)?;
    let plan = select_edges(&table, &prune)?;
    let graph = apply_prune(g, &plan)?;
    Ok(KcesOutput {
        graph,
        table,
        plan,
        pseudo_labels: pseudo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn scores(n: usize) -> Vec<(Edge, f64)> {
        (0..n).map(|i| ((i, i + 1), (i % 4) as f64)).collect()
    }

    #[test]
    fn ceiling_count() {
        assert_eq!(prune_count(0.25, 10), 3);
        assert_eq!(prune_count(0.0, 10), 0);
        assert_eq!(prune_count(1.0, 10), 10);
        assert_eq!(prune_count(0.1, 30), 3);
        assert_eq!(prune_count(0.2, 5), 1);
        assert_eq!(prune_count(0.01, 10), 1);
    }

    #[test]
    fn alpha_out_of_range() {
        assert!(PruneConfig::new(1.5, Strategy::HighKc).is_err());
        assert!(PruneConfig::new(-0.1, Strategy::LowKc).is_err());
    }

    #[test]
    fn high_and_low_with_ties() {
        let s = scores(10);
        let hi = select_ranked(&s, &PruneConfig::new(0.25, Strategy::HighKc).unwrap()).unwrap();
        assert_eq!(hi.k, 3);
        // score 3 at i = 3, 7; then score 2 at i = 2
        assert_eq!(hi.removed, vec![(3, 4), (7, 8), (2, 3)]);
        let lo = select_ranked(&s, &PruneConfig::new(0.25, Strategy::LowKc).unwrap()).unwrap();
        assert_eq!(lo.removed, vec![(0, 1), (4, 5), (8, 9)]);
    }

    #[test]
    fn full_ratio_plans_cover_everything() {
        let s = scores(7);
        let mut hi = select_ranked(&s, &PruneConfig::new(1.0, Strategy::HighKc).unwrap())
            .unwrap()
            .removed;
        let mut lo = select_ranked(&s, &PruneConfig::new(1.0, Strategy::LowKc).unwrap())
            .unwrap()
            .removed;
        hi.sort_unstable();
        lo.sort_unstable();
        assert_eq!(hi, lo);
        assert_eq!(hi.len(), 7);
    }

    #[test]
    fn random_is_seeded_and_order_free() {
        let s = scores(20);
        let cfg = PruneConfig::new(0.3, Strategy::Random { seed: 4 }).unwrap();
        let a = select_ranked(&s, &cfg).unwrap();
        let mut rev = s.clone();
        rev.reverse();
        let b = select_ranked(&rev, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.removed.len(), 6);
    }

    #[test]
    fn apply_and_stale() {
        let g = Graph::new(Matrix::<f64>::identity(3), [(0, 1), (1, 2), (0, 2)], None).unwrap();
        let empty = PrunePlan {
            removed: vec![],
            k: 0,
            config: PruneConfig::new(0.0, Strategy::HighKc).unwrap(),
        };
        assert_eq!(apply_prune(&g, &empty).unwrap(), g);
        let one = PrunePlan {
            removed: vec![(0, 1)],
            k: 1,
            config: PruneConfig::new(0.3, Strategy::HighKc).unwrap(),
        };
        let path = apply_prune(&g, &one).unwrap();
        assert_eq!(path.degrees(), &[2, 2, 3]);
        assert!(matches!(
            apply_prune(&path, &one),
            Err(Error::StalePlan { u: 0, v: 1 })
        ));
    }
}
