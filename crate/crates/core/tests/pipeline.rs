use kces::density::{distribution, median};
use kces::kc_score::kc_scores_all;
use kces::perturb::random_attack;
use kces::pseudolabel::{encode_labels, kmeans_pseudo_labels, LabelSource};
use kces::sanitize::{kces_pipeline, select_edges, PruneConfig, Strategy};
use kces::synth::{sbm, SbmConfig};
use kces::{Encoding, Graph, Method};

fn benchmark(seed: u64) -> Graph {
    sbm(&SbmConfig {
        n_nodes: 200,
        n_classes: 2,
        p_in: 0.1,
        p_out: 0.01,
        n_features: 32,
        signal: 1.0,
        noise: 1.0,
        seed,
    })
    .unwrap()
}

#[test]
fn injected_edge_recall() {
    let mut rates = Vec::new();
    for seed in 0..10 {
        let g = benchmark(seed);
        let (att, rec) = random_attack(&g, 0.25, seed, 1.0).unwrap();
        let alpha = rec.added.len() as f64 / att.n_edges() as f64;
        let out = kces_pipeline(&att, alpha, 2, seed, Method::Fast).unwrap();
        assert_eq!(out.plan.k, rec.added.len());
        let hits = out
            .plan
            .removed
            .iter()
            .filter(|e| rec.added.contains(e))
            .count();
        rates.push(hits as f64 / out.plan.k as f64);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    println!("injected-edge recall {mean:.3} {rates:?}");
    assert!(mean >= 0.6, "mean recall {mean:.3}");
}

#[test]
fn high_and_low_plans_are_disjoint_below_half() {
    let g = benchmark(0);
    let y = encode_labels(
        LabelSource::from_pseudo(&kmeans_pseudo_labels(&g, 2, 0, 10).unwrap()),
        Encoding::OneHot,
    )
    .unwrap();
    let table = kc_scores_all(&g, &y, Method::Fast).unwrap();
    let hi = select_edges(&table, &PruneConfig::new(0.25, Strategy::HighKc).unwrap()).unwrap();
    let lo = select_edges(&table, &PruneConfig::new(0.25, Strategy::LowKc).unwrap()).unwrap();
    assert!(hi.removed.iter().all(|e| !lo.removed.contains(e)));
    assert_eq!(hi, select_edges(&table, &hi.config).unwrap());
}

#[test]
fn clean_scores_pile_up_near_zero_and_attacks_raise_the_median() {
    for seed in 0..10 {
        let g = benchmark(seed);
        let (att, _) = random_attack(&g, 0.25, seed, 0.5).unwrap();
        let raw = |h: &Graph| {
            let p = kmeans_pseudo_labels(h, 2, seed, 10).unwrap();
            let y = encode_labels(LabelSource::from_pseudo(&p), Encoding::OneHot).unwrap();
            let t = kc_scores_all(h, &y, Method::Fast).unwrap();
            t.scores().iter().map(|s| s.1).collect::<Vec<_>>()
        };
        let (c, a) = (raw(&g), raw(&att));
        let mode = distribution(&c).unwrap().kde_mode();
        assert!(mode < 0.2, "seed {seed}: mode {mode}");
        assert!(median(&a) > median(&c), "seed {seed}");
    }
}
