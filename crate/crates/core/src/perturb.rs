//! Desk-scale structure attacks with exact perturbation records.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{canonical, Edge, Graph};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Random,
    Dice,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Random => "random",
            AttackKind::Dice => "dice",
        })
    }
}

impl FromStr for AttackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(AttackKind::Random),
            "dice" => Ok(AttackKind::Dice),
            other => Err(Error::Config(format!("unknown attack {other:?}"))),
        }
    }
}

/// Which labels drove a label-aware attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelOrigin {
    GroundTruth,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationRecord {
    /// Sorted canonical edges.
    pub added: Vec<Edge>,
    /// Sorted canonical edges.
    pub removed: Vec<Edge>,
    pub budget: usize,
    pub seed: u64,
    pub kind: AttackKind,
    pub labels: Option<LabelOrigin>,
}

impl PerturbationRecord {
    /// Replays the record on the clean graph.
    pub fn apply<T: Scalar>(&self, clean: &Graph<T>) -> Result<Graph<T>> {
        edit(clean, &self.added, &self.removed)
    }

    /// Undoes the record on the attacked graph.
    pub fn invert<T: Scalar>(&self, attacked: &Graph<T>) -> Result<Graph<T>> {
        edit(attacked, &self.removed, &self.added)
    }

    /// `+<TAB>u<TAB>v` for additions, `-<TAB>u<TAB>v` for removals.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (u, v) in &self.added {
            let _ = writeln!(s, "+\t{u}\t{v}");
        }
        for (u, v) in &self.removed {
            let _ = writeln!(s, "-\t{u}\t{v}");
        }
        s
    }

    /// Parses the edge lists of a record TSV (metadata fields are left default).
    pub fn parse_edges(text: &str) -> Result<(Vec<Edge>, Vec<Edge>)> {
        let mut added = Vec::new();
        let mut removed = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Parse {
                path: "<record>".into(),
                line: i + 1,
                message: format!("malformed record line {line:?}"),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad());
            }
            let u: usize = cols[1].parse().map_err(|_| bad())?;
            let v: usize = cols[2].parse().map_err(|_| bad())?;
            match cols[0] {
                "+" => added.push(canonical(u, v)),
                "-" | "−" => removed.push(canonical(u, v)),
                _ => return Err(bad()),
            }
        }
        Ok((added, removed))
    }
}

fn edit<T: Scalar>(g: &Graph<T>, add: &[Edge], remove: &[Edge]) -> Result<Graph<T>> {
    let mut edges = g.edges().clone();
    for &(u, v) in remove {
        if !edges.remove(&(u, v)) {
            return Err(Error::StalePlan { u, v });
        }
    }
    for &(u, v) in add {
        if !edges.insert((u, v)) {
            return Err(Error::Config(format!("edge ({u}, {v}) is already present")));
        }
    }
    g.with_edges(edges)
}

fn budget_for(budget_ratio: f64, n_edges: usize) -> Result<usize> {
    if !(budget_ratio > 0.0 && budget_ratio <= 1.0) {
        return Err(Error::Config(format!(
            "budget ratio {budget_ratio} outside (0, 1]"
        )));
    }
    Ok((budget_ratio * n_edges as f64).round() as usize)
}

/// Samples `count` distinct non-edges satisfying `allowed`, of which exactly
/// `available` exist.
fn sample_non_edges<T: Scalar>(
    g: &Graph<T>,
    count: usize,
    available: usize,
    allowed: impl Fn(usize, usize) -> bool,
    rng: &mut Rng,
) -> Result<Vec<Edge>> {
    if count > available {
        return Err(Error::Budget(format!(
            "{count} additions requested but only {available} candidate non-edges exist"
        )));
    }
    let n = g.n_nodes();
    let mut chosen = BTreeSet::new();
    if count * 2 > available {
        let pool: Vec<Edge> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| allowed(u, v) && !g.has_edge(u, v))
            .collect();
        debug_assert_eq!(pool.len(), available);
        for i in index::sample(rng, pool.len(), count) {
            chosen.insert(pool[i]);
        }
    } else {
        while chosen.len() < count {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v || !allowed(u, v) || g.has_edge(u, v) {
                continue;
            }
            chosen.insert(canonical(u, v));
        }
    }
    Ok(chosen.into_iter().collect())
}

fn sample_edges(pool: &[Edge], count: usize, rng: &mut Rng) -> Result<Vec<Edge>> {
    if count > pool.len() {
        return Err(Error::Budget(format!(
            "{count} removals requested but only {} candidate edges exist",
            pool.len()
        )));
    }
    let mut v: Vec<Edge> = index::sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    v.sort_unstable();
    Ok(v)
}

/// Uniform random additions and removals; `round(add_fraction · budget)` of the
/// `round(budget_ratio · |E|)` modifications are additions.
pub fn random_attack<T: Scalar>(
    g: &Graph<T>,
    budget_ratio: f64,
    seed: u64,
    add_fraction: f64,
) -> Result<(Graph<T>, PerturbationRecord)> {
    if !(0.0..=1.0).contains(&add_fraction) {
        return Err(Error::Config(format!(
            "add fraction {add_fraction} outside [0, 1]"
        )));
    }
    let budget = budget_for(budget_ratio, g.n_edges())?;
    let n_add = (add_fraction * budget as f64).round() as usize;
    let n_remove = budget - n_add;
    let n = g.n_nodes();
    let mut rng = rng::seeded(seed);
    let total_pairs = n * n.saturating_sub(1) / 2;
    let added = sample_non_edges(g, n_add, total_pairs - g.n_edges(), |_, _| true, &mut rng)?;
    let pool: Vec<Edge> = g.edges().iter().copied().collect();
    let removed = sample_edges(&pool, n_remove, &mut rng)?;
    let record = PerturbationRecord {
        added,
        removed,
        budget,
        seed,
        kind: AttackKind::Random,
        labels: None,
    };
    Ok((record.apply(g)?, record))
}

/// Delete-internally, connect-externally: half the budget removes same-label
/// edges, the other half (plus one for odd budgets) adds cross-label non-edges.
pub fn dice_attack<T: Scalar>(
    g: &Graph<T>,
    labels: &[usize],
    budget_ratio: f64,
    seed: u64,
) -> Result<(Graph<T>, PerturbationRecord)> {
    dice_attack_with(g, labels, LabelOrigin::GroundTruth, budget_ratio, seed)
}

pub fn dice_attack_with<T: Scalar>(
    g: &Graph<T>,
    labels: &[usize],
    origin: LabelOrigin,
    budget_ratio: f64,
    seed: u64,
) -> Result<(Graph<T>, PerturbationRecord)> {
    let n = g.n_nodes();
    if labels.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} labels"),
            got: labels.len().to_string(),
        });
    }
    let budget = budget_for(budget_ratio, g.n_edges())?;
    let n_remove = budget / 2;
    let n_add = budget - n_remove;

    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&c| sizes[c] += 1);
    let same_pairs: usize = sizes.iter().map(|&s| s * s.saturating_sub(1) / 2).sum();
    let cross_pairs = n * n.saturating_sub(1) / 2 - same_pairs;
    let intra: Vec<Edge> = g
        .edges()
        .iter()
        .copied()
        .filter(|&(u, v)| labels[u] == labels[v])
        .collect();
    let cross_edges = g.n_edges() - intra.len();
    if n_remove > 0 && intra.is_empty() {
        return Err(Error::Budget("no same-label edges to delete".into()));
    }
    if n_add > 0 && cross_pairs == cross_edges {
        return Err(Error::Budget("no cross-label non-edges to connect".into()));
    }

    let mut rng = rng::seeded(seed);
    let added = sample_non_edges(
        g,
        n_add,
        cross_pairs - cross_edges,
        |u, v| labels[u] != labels[v],
        &mut rng,
    )?;
    let removed = sample_edges(&intra, n_remove, &mut rng)?;
    let record = PerturbationRecord {
        added,
        removed,
        budget,
        seed,
        kind: AttackKind::Dice,
        labels: Some(origin),
    };
    Ok((record.apply(g)?, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn ring(n: usize) -> Graph<f64> {
        Graph::new(Matrix::identity(n), (0..n).map(|i| (i, (i + 1) % n)), None).unwrap()
    }

    #[test]
    fn budget_is_a_quarter_of_edges() {
        let g = ring(100);
        let (_, rec) = random_attack(&g, 0.25, 1, 0.5).unwrap();
        assert_eq!(rec.budget, 25);
        assert_eq!(rec.added.len() + rec.removed.len(), 25);
        assert_eq!(rec.added.len(), 13);
    }

    #[test]
    fn add_only_and_determinism() {
        let g = ring(30);
        let (a, ra) = random_attack(&g, 0.5, 9, 1.0).unwrap();
        let (b, rb) = random_attack(&g, 0.5, 9, 1.0).unwrap();
        assert!(ra.removed.is_empty());
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        for e in &ra.added {
            assert!(!g.has_edge(e.0, e.1));
            assert!(a.has_edge(e.0, e.1));
        }
    }

    #[test]
    fn record_round_trips() {
        let g = ring(40);
        let (att, rec) = random_attack(&g, 0.5, 3, 0.5).unwrap();
        assert_eq!(rec.apply(&g).unwrap(), att);
        assert_eq!(rec.invert(&att).unwrap(), g);
        let (added, removed) = PerturbationRecord::parse_edges(&rec.to_tsv()).unwrap();
        assert_eq!(added, rec.added);
        assert_eq!(removed, rec.removed);
    }

    #[test]
    fn infeasible_additions() {
        // complete graph on 4 nodes has no non-edges
        let edges: Vec<Edge> = (0..4)
            .flat_map(|u| ((u + 1)..4).map(move |v| (u, v)))
            .collect();
        let g = Graph::new(Matrix::<f64>::identity(4), edges, None).unwrap();
        assert!(matches!(
            random_attack(&g, 0.5, 0, 1.0),
            Err(Error::Budget(_))
        ));
        assert!(random_attack(&g, 0.0, 0, 1.0).is_err());
    }

    #[test]
    fn dice_respects_labels() {
        let n = 20;
        let labels: Vec<usize> = (0..n).map(|i| i / 10).collect();
        let edges: Vec<Edge> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| u / 10 == v / 10)
            .collect();
        let g = Graph::new(Matrix::<f64>::identity(n), edges, None).unwrap();
        let (_, rec) = dice_attack(&g, &labels, 0.3, 5).unwrap();
        assert_eq!(rec.budget, 27);
        assert_eq!(rec.added.len(), 14);
        assert_eq!(rec.removed.len(), 13);
        assert!(rec.added.iter().all(|&(u, v)| labels[u] != labels[v]));
        assert!(rec.removed.iter().all(|&(u, v)| labels[u] == labels[v]));
        assert_eq!(rec.labels, Some(LabelOrigin::GroundTruth));
    }

    #[test]
    fn dice_single_modification_is_an_addition() {
        let labels = vec![0, 0, 1, 1];
        let g = Graph::new(Matrix::<f64>::identity(4), [(0, 1), (2, 3)], None).unwrap();
        let (_, rec) = dice_attack(&g, &labels, 0.5, 0).unwrap();
        assert_eq!(rec.budget, 1);
        assert_eq!(rec.added.len(), 1);
        assert!(rec.removed.is_empty());
    }

    #[test]
    fn dice_infeasible() {
        let labels = vec![0, 1, 0, 1];
        let g = Graph::new(Matrix::<f64>::identity(4), [(0, 1), (2, 3)], None).unwrap();
        assert!(matches!(
            dice_attack(&g, &labels, 1.0, 0),
            Err(Error::Budget(_))
        ));
    }
}
