mod common;

use kces::graph::aggregate_features;
use kces::kc_score::gkc_state;
use kces::kernel::{gkc, gram_matrix, solve_spd};
use kces::AggregatedFeatures;
use kces::{Graph, Matrix};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;

fn unit_rows(n: usize, f: usize, seed: u64) -> AggregatedFeatures {
    let mut r = kces::rng::seeded(seed);
    let mut m = Matrix::from_fn(n, f, |_, _| r.sample(StandardNormal));
    for i in 0..n {
        let row = m.row_mut(i);
        let s = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= s);
    }
    AggregatedFeatures::from_unit_rows(m).unwrap()
}

fn rows(xt: &AggregatedFeatures) -> Vec<Vec<f64>> {
    (0..xt.n_nodes()).map(|i| xt.row(i).to_vec()).collect()
}

fn permuted(g: &Graph, perm: &[usize]) -> Graph {
    // node i of the new graph is node perm[i] of the old one
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let x = Matrix::from_fn(g.n_nodes(), g.n_features(), |i, j| {
        g.features()[(perm[i], j)]
    });
    let edges = g.edges().iter().map(|&(u, v)| (inv[u], inv[v]));
    Graph::new(x, edges, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gram_diagonal_and_bounds(n in 1usize..24, f in 1usize..12, seed in any::<u64>()) {
        let gm = gram_matrix(&unit_rows(n, f, seed)).unwrap();
        let h = gm.h();
        for i in 0..n {
            prop_assert_eq!(h[(i, i)], 0.5);
            for j in 0..n {
                prop_assert!(h[(i, j)].abs() <= 0.5);
                prop_assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
    }

    #[test]
    fn gkc_invariant_under_node_relabeling(
        n in 3usize..24,
        seed in any::<u64>(),
        perm in Just(()).prop_perturb(|_, mut r| {
            let mut p: Vec<usize> = (0..64).collect();
            for i in (1..64).rev() {
                p.swap(i, r.random_range(0..=i));
            }
            p
        }),
    ) {
        let g = common::random_graph(n, 6, 0.25, seed);
        let perm: Vec<usize> = perm.into_iter().filter(|&p| p < n).collect();
        let classes = common::random_classes(n, 2, seed);
        let y = common::one_hot(&classes);
        let base = gkc_state(&g, &y).unwrap();
        // isolated pairs aggregate to identical rows; the ridged solve is not
        // permutation-exact
        prop_assume!(!base.gkc.ridge_used);
        let a = base.gkc.value;
        let h = permuted(&g, &perm);
        let yp = y.permute_rows(&perm);
        let b = gkc_state(&h, &yp).unwrap().gkc.value;
        prop_assert!(common::rel_close(a, b, 1e-10, 0.0), "{a} vs {b}");
    }

    #[test]
    fn gkc_invariant_under_cluster_id_permutation(n in 4usize..24, k in 2usize..5, seed in any::<u64>()) {
        let g = common::random_graph(n, 6, 0.2, seed);
        let classes = common::random_classes(n, k.min(n), seed);
        let kk = k.min(n);
        // rotate ids: c -> (c + 1) mod k
        let rotated: Vec<usize> = classes.iter().map(|&c| (c + 1) % kk).collect();
        let a = gkc_state(&g, &common::one_hot(&classes)).unwrap().gkc.value;
        let b = gkc_state(&g, &common::one_hot(&rotated)).unwrap().gkc.value;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn lambda_min_positive_on_random_unit_rows() {
    for seed in 0..100u64 {
        let n = 2 + (seed as usize % 31);
        let gm = gram_matrix(&unit_rows(n, 32, seed)).unwrap();
        assert!(!gm.ridge_used());
        assert!(gm.lambda_min().unwrap() > 0.0, "seed {seed}");
    }
}

#[test]
fn lambda_min_matches_jacobi_oracle() {
    for seed in 0..5 {
        let gm = gram_matrix(&unit_rows(16, 32, seed)).unwrap();
        let dense: Vec<Vec<f64>> = (0..16).map(|i| gm.h().row(i).to_vec()).collect();
        let oracle = common::jacobi_eigenvalues(&dense);
        let ours = gm.eigen().unwrap();
        for (a, b) in ours.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        assert!(oracle[0] > 0.0);
        assert!((gm.lambda_min().unwrap() - oracle[0]).abs() <= 1e-12);
    }
}

#[test]
fn solve_matches_dense_inverse() {
    for seed in 0..10 {
        let xt = unit_rows(8, 5, seed);
        let gm = gram_matrix(&xt).unwrap();
        let inv = common::dense_inverse(&common::dense_gram(&rows(&xt)));
        let mut r = kces::rng::seeded(seed + 100);
        let rhs: Vec<f64> = (0..8).map(|_| r.sample(StandardNormal)).collect();
        let z = solve_spd(&gm, &rhs).unwrap();
        let oracle = common::dense_matvec(&inv, &rhs);
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in z.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn gkc_matches_explicit_inverse_on_four_nodes() {
    let x = Matrix::from_rows(&[
        vec![1.0, 0.2, -0.3],
        vec![0.1, 1.0, 0.4],
        vec![-0.5, 0.3, 1.0],
        vec![0.7, -0.6, 0.2],
    ])
    .unwrap();
    let g = Graph::new(x, [(0, 1), (1, 2), (2, 3)], None).unwrap();
    let y = common::one_hot(&[0, 0, 1, 1]);
    let gm = gram_matrix(&aggregate_features(&g).unwrap()).unwrap();
    let ours = gkc(&gm, &y).unwrap().value;
    let oracle = common::dense_graph_gkc(&g, &y);
    assert!(
        common::rel_close(ours, oracle, 1e-10, 0.0),
        "{ours} vs {oracle}"
    );
}
