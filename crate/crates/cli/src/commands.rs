use std::fs;
use std::path::{Path, PathBuf};

use kces::density::{distribution, subsample};
use kces::gnn::{evaluate_classifier, spectral_predictor, Split, StepSize, TrainConfig};
use kces::io::{format_edges, load_graph, read_labels, write_text};
use kces::kc_score::{kc_scores_all, parse_scores_tsv};
use kces::kernel::{gram_matrix, write_gram};
use kces::perturb::{dice_attack_with, random_attack, LabelOrigin};
use kces::pseudolabel::{encode_labels, kmeans_pseudo_labels, LabelSource};
use kces::sanitize::{apply_prune, select_edges, select_ranked, PruneConfig, Strategy};
use kces::synth::{sbm, SbmConfig};
use kces::{Error, Graph, KcScoreTable, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{self, RunManifest};
use crate::{
    AttackArg, AttackArgs, DistArgs, GraphInput, ModelArgs, PruneArgs, ScoreArgs, ScoringArgs,
    StrategyArg, SweepArgs, SynthArgs, TrainArgs,
};

fn finish<P: Serialize>(
    mut m: RunManifest<P>,
    outputs: &[&Path],
    explicit: Option<&Path>,
    default: PathBuf,
) -> Result<()> {
    for o in outputs {
        m.output(o)?;
    }
    m.write(explicit.unwrap_or(&default))
}

fn load(input: &GraphInput, labels: Option<&Path>) -> Result<Graph> {
    Ok(load_graph(&input.edges, &input.features, labels)?.0)
}

fn with_extension_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// KC scores of every edge under ground-truth labels or k-means pseudo labels.
fn score_graph(g: &Graph, s: &ScoringArgs) -> Result<KcScoreTable> {
    let labels = match (g.labels(), s.k) {
        (Some(classes), _) => encode_labels(LabelSource::from_classes(classes), s.encoding.into())?,
        (None, Some(k)) => {
            let pseudo = kmeans_pseudo_labels(g, k, s.seed, s.restarts)?;
            info!("pseudo labels: k = {k}, inertia = {}", pseudo.inertia);
            encode_labels(LabelSource::from_pseudo(&pseudo), s.encoding.into())?
        }
        (None, None) => {
            return Err(Error::Config(
                "either --labels or --k (pseudo-label clusters) is required".into(),
            ))
        }
    };
    let table = kc_scores_all(g, &labels, s.method.into())?;
    info!(
        "scored {} edges; base GKC {}; {} fast-path fallback(s)",
        table.len(),
        table.base_gkc,
        table.fast_fallbacks
    );
    Ok(table)
}

pub fn score(a: &ScoreArgs, manifest_out: Option<&Path>) -> Result<()> {
    let g = load(&a.graph, a.scoring.labels.as_deref())?;
    let mut m = RunManifest::new("score", a);
    m.input(&a.graph.edges)?;
    m.input(&a.graph.features)?;
    if let Some(l) = &a.scoring.labels {
        m.input(l)?;
    }
    let table = score_graph(&g, &a.scoring)?;
    write_text(&a.out, &table.to_tsv())?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(p) = &a.gram_out {
        let gm = gram_matrix(&kces::graph::aggregate_features(&g)?)?;
        let mut buf = Vec::new();
        write_gram(gm.h(), &mut buf).map_err(|source| Error::Io {
            path: p.clone(),
            source,
        })?;
        fs::write(p, buf).map_err(|source| Error::Io {
            path: p.clone(),
            source,
        })?;
        outputs.push(p);
    }
    finish(m, &outputs, manifest_out, manifest::default_path(&a.out))
}

fn strategy(s: StrategyArg, seed: u64) -> Strategy {
    match s {
        StrategyArg::HighKc => Strategy::HighKc,
        StrategyArg::LowKc => Strategy::LowKc,
        StrategyArg::Random => Strategy::Random { seed },
    }
}

pub fn prune(a: &PruneArgs, manifest_out: Option<&Path>) -> Result<()> {
    let config = PruneConfig::new(a.alpha, strategy(a.strategy, a.scoring.seed))?;
    let g = load(&a.graph, a.scoring.labels.as_deref())?;
    let mut m = RunManifest::new("prune", a);
    m.input(&a.graph.edges)?;
    m.input(&a.graph.features)?;
    let plan = match &a.scores {
        Some(path) => {
            m.input(path)?;
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            let records = parse_scores_tsv::<f64>(&text)?;
            let scores: Vec<_> = records.iter().map(|r| (r.edge, r.score)).collect();
            select_ranked(&scores, &config)?
        }
        None => {
            if let Some(l) = &a.scoring.labels {
                m.input(l)?;
            }
            select_edges(&score_graph(&g, &a.scoring)?, &config)?
        }
    };
    let pruned = apply_prune(&g, &plan)?;
    let plan_out = a
        .plan_out
        .clone()
        .unwrap_or_else(|| with_extension_suffix(&a.out, ".plan.tsv"));
    write_text(&a.out, &format_edges(pruned.edges()))?;
    write_text(&plan_out, &plan.to_tsv())?;
    info!("removed {} of {} edges", plan.k, g.n_edges());
    finish(
        m,
        &[&a.out, &plan_out],
        manifest_out,
        manifest::default_path(&a.out),
    )
}

pub fn attack(a: &AttackArgs, manifest_out: Option<&Path>) -> Result<()> {
    let g = load(&a.graph, None)?;
    let mut m = RunManifest::new("attack", a);
    m.input(&a.graph.edges)?;
    m.input(&a.graph.features)?;
    let (attacked, record) = match a.kind {
        AttackArg::Random => random_attack(&g, a.budget_ratio, a.seed, a.add_fraction)?,
        AttackArg::Dice => {
            let (labels, origin) = match (&a.labels, a.k) {
                (Some(p), _) => {
                    m.input(p)?;
                    (read_labels(p)?, LabelOrigin::GroundTruth)
                }
                (None, Some(k)) => {
                    let pseudo =
                        kmeans_pseudo_labels(&g, k, a.seed, kces::pseudolabel::DEFAULT_RESTARTS)?;
                    (pseudo.assignments, LabelOrigin::Pseudo)
                }
                (None, None) => {
                    return Err(Error::Config("dice needs --labels or --k".into()));
                }
            };
            dice_attack_with(&g, &labels, origin, a.budget_ratio, a.seed)?
        }
    };
    let record_out = a
        .record_out
        .clone()
        .unwrap_or_else(|| with_extension_suffix(&a.out, ".record.tsv"));
    let origin = match record.labels {
        Some(LabelOrigin::GroundTruth) => "ground-truth",
        Some(LabelOrigin::Pseudo) => "pseudo",
        None => "none",
    };
    let header = format!(
        "# kind={} budget={} seed={} labels={origin}\n",
        record.kind, record.budget, record.seed
    );
    write_text(&a.out, &format_edges(attacked.edges()))?;
    write_text(&record_out, &(header + &record.to_tsv()))?;
    finish(
        m,
        &[&a.out, &record_out],
        manifest_out,
        manifest::default_path(&a.out),
    )
}

fn train_config(model: &ModelArgs, seed: u64) -> Result<TrainConfig<f64>> {
    let step = if model.eta == "auto" {
        StepSize::InverseLambdaMax
    } else {
        let eta: f64 = model.eta.parse().map_err(|_| {
            Error::Config(format!(
                "--eta must be a number or `auto`, got {:?}",
                model.eta
            ))
        })?;
        StepSize::Fixed(eta)
    };
    TrainConfig::new(model.m, step, model.kappa, model.steps, seed)
}

pub fn train(a: &TrainArgs, manifest_out: Option<&Path>) -> Result<()> {
    let cfg = train_config(&a.model, a.seed)?;
    let g = load(&a.graph, Some(&a.labels))?;
    let mut m = RunManifest::new("train", a);
    m.input(&a.graph.edges)?;
    m.input(&a.graph.features)?;
    m.input(&a.labels)?;
    let labels = g.labels().expect("loaded with labels").to_vec();
    let split = Split::random(g.n_nodes(), a.split_seed, a.train_fraction, a.val_fraction)?;
    let report = evaluate_classifier(&g, &labels, &split, &cfg)?;
    write_text(&a.out, &report.to_csv())?;
    let mut outputs = vec![a.out.clone()];
    if let Some(prefix) = &a.trace_out {
        let xt = kces::graph::aggregate_features(&g)?.select_rows(&split.train);
        let gm = gram_matrix(&xt)?;
        for (class, trace) in report.traces.iter().enumerate() {
            let y: Vec<f64> = split
                .train
                .iter()
                .map(|&i| if labels[i] == class { 1.0 } else { -1.0 })
                .collect();
            let pred = spectral_predictor(&gm, &y, trace.eta)?;
            let path = with_extension_suffix(prefix, &format!(".class{class}.csv"));
            write_text(&path, &trace.to_csv(Some(&pred)))?;
            outputs.push(path);
        }
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    finish(m, &refs, manifest_out, manifest::default_path(&a.out))
}

pub fn dist(a: &DistArgs, manifest_out: Option<&Path>) -> Result<()> {
    let mut m = RunManifest::new("dist", a);
    m.input(&a.features)?;
    if let Some(l) = &a.scoring.labels {
        m.input(l)?;
    }
    let variants: Vec<(&str, &PathBuf)> = [
        Some(("clean", &a.clean)),
        a.attacked.as_ref().map(|p| ("attacked", p)),
        a.pruned.as_ref().map(|p| ("pruned", p)),
    ]
    .into_iter()
    .flatten()
    .collect();
    fs::create_dir_all(&a.out_dir).map_err(|source| Error::Io {
        path: a.out_dir.clone(),
        source,
    })?;
    let mut outputs = Vec::new();
    for (name, edges) in variants {
        m.input(edges)?;
        let input = GraphInput {
            edges: edges.clone(),
            features: a.features.clone(),
        };
        let g = load(&input, a.scoring.labels.as_deref())?;
        let table = score_graph(&g, &a.scoring)?;
        if table.len() < a.samples {
            warn!(
                "{name}: only {} edges, fewer than --samples {}; using all",
                table.len(),
                a.samples
            );
        }
        let sample = subsample(&table.scores(), a.samples, a.scoring.seed);
        let raw: Vec<f64> = sample.iter().map(|&(_, s)| s).collect();
        let export = distribution(&raw)?;
        let path = a.out_dir.join(format!("{name}.csv"));
        write_text(&path, &export.to_csv())?;
        outputs.push(path);
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    finish(m, &refs, manifest_out, a.out_dir.join("manifest.json"))
}

/// The pruning ratios 0.05, 0.10, ..., 0.95.
pub fn alpha_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug)]
struct SweepRow {
    strategy: usize,
    alpha: usize,
    seed: u64,
    removed: usize,
    train: f64,
    val: f64,
    test: f64,
}

pub fn sweep(a: &SweepArgs, manifest_out: Option<&Path>) -> Result<()> {
    if a.strategies.is_empty() || a.seeds.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one strategy and one seed".into(),
        ));
    }
    train_config(&a.model, 0)?;
    let g = load(&a.graph, Some(&a.labels))?;
    let mut m = RunManifest::new("sweep", a);
    m.input(&a.graph.edges)?;
    m.input(&a.graph.features)?;
    m.input(&a.labels)?;
    let labels = g.labels().expect("loaded with labels").to_vec();
    let k =
        a.k.unwrap_or_else(|| labels.iter().max().map_or(0, |c| c + 1));

    // One pseudo-labelling and score table per seed; scores never see the
    // ground truth.
    let tables: Vec<KcScoreTable> = a
        .seeds
        .iter()
        .map(|&seed| {
            let s = ScoringArgs {
                labels: None,
                k: Some(k),
                seed,
                method: a.method,
                encoding: a.encoding,
                restarts: a.restarts,
            };
            score_graph(&g, &s)
        })
        .collect::<Result<_>>()?;

    let grid = alpha_grid();
    let mut cells = Vec::new();
    for (si, _) in a.strategies.iter().enumerate() {
        for ai in 0..grid.len() {
            for seed_i in 0..a.seeds.len() {
                cells.push((si, ai, seed_i));
            }
        }
    }
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(si, ai, seed_i)| {
            let seed = a.seeds[seed_i];
            let config = PruneConfig::new(grid[ai], strategy(a.strategies[si], seed))?;
            let plan = select_edges(&tables[seed_i], &config)?;
            let pruned = apply_prune(&g, &plan)?;
            let split = Split::standard(g.n_nodes(), seed)?;
            let report =
                evaluate_classifier(&pruned, &labels, &split, &train_config(&a.model, seed)?)?;
            Ok(SweepRow {
                strategy: si,
                alpha: ai,
                seed,
                removed: plan.k,
                train: report.train_accuracy,
                val: report.val_accuracy,
                test: report.test_accuracy,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| (r.strategy, r.alpha, r.seed));

    let mut csv =
        String::from("strategy,alpha,seed,removed,train_accuracy,val_accuracy,test_accuracy\n");
    for r in &rows {
        let name = strategy(a.strategies[r.strategy], 0).name();
        csv.push_str(&format!(
            "{name},{:.2},{},{},{},{},{}\n",
            grid[r.alpha], r.seed, r.removed, r.train, r.val, r.test
        ));
    }
    write_text(&a.out, &csv)?;
    finish(m, &[&a.out], manifest_out, manifest::default_path(&a.out))
}

pub fn synth(a: &SynthArgs, manifest_out: Option<&Path>) -> Result<()> {
    let cfg = SbmConfig {
        n_nodes: a.nodes,
        n_classes: a.classes,
        p_in: a.p_in,
        p_out: a.p_out,
        n_features: a.dim,
        signal: a.signal,
        noise: a.noise,
        seed: a.seed,
    };
    let g: Graph = sbm(&cfg)?;
    kces::io::save_graph(&g, &a.edges_out, &a.features_out, Some(&a.labels_out))?;
    let m = RunManifest::new("synth", a);
    finish(
        m,
        &[&a.edges_out, &a.features_out, &a.labels_out],
        manifest_out,
        manifest::default_path(&a.edges_out),
    )
}
