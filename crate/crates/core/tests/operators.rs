mod common;

use graph1l::linalg::{dot, norm2};
use graph1l::{energy_dp, energy_j, shifted_subgradient, verify_subgradient, Bandwidth, Denominator, WeightedGraph};
use proptest::prelude::*;
use rand::Rng;

fn graph_strategy() -> impl Strategy<Value = WeightedGraph> {
    (2usize..40, 0.0f64..0.5, any::<u64>()).prop_map(|(n, p, seed)| common::random_connected(n, p, seed))
}

fn graph_and_vector() -> impl Strategy<Value = (WeightedGraph, Vec<f64>)> {
    graph_strategy().prop_flat_map(|g| {
        let n = g.n();
        (Just(g), prop::collection::vec(-10.0f64..10.0, n))
    })
}

fn graph_and_dual() -> impl Strategy<Value = (WeightedGraph, Vec<f64>)> {
    graph_strategy().prop_flat_map(|g| {
        let m = g.m();
        (Just(g), prop::collection::vec(-1.0f64..=1.0, m))
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn adjoint_image_is_orthogonal_to_degrees((g, z) in graph_and_dual()) {
        let check = verify_subgradient(&g.gradient(), &z, 1e-12).unwrap();
        prop_assert!(check.dual_feasible);
        prop_assert!(check.orthogonal, "<p, d> = {}", dot(&check.p, g.degrees()));
    }

    #[test]
    fn adjoint_identity((g, u) in graph_and_vector(), seed in any::<u64>()) {
        let op = g.gradient();
        let z = common::random_vector(g.m(), &mut common::rng(seed));
        let lhs = dot(&op.apply(&u).unwrap(), &z);
        let rhs = dot(&u, &op.adjoint(&z).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + norm2(&u) * norm2(&z) * g.m() as f64));
    }

    #[test]
    fn multiples_of_degrees_have_zero_energy(g in graph_strategy(), c in -5.0f64..5.0) {
        let u: Vec<f64> = g.degrees().iter().map(|d| c * d).collect();
        prop_assert!(energy_j(&g.gradient(), &u).unwrap() <= 1e-12 * norm2(&u).max(1.0));
    }

    #[test]
    fn energies_are_homogeneous((g, u) in graph_and_vector(), alpha in -20.0f64..20.0) {
        let op = g.gradient();
        let au: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        prop_assert!(close(energy_j(&op, &au).unwrap(), alpha.abs() * energy_j(&op, &u).unwrap(), 1e-12));
        for p in [1.0, 1.5, 2.0] {
            let lhs = energy_dp(&g, &au, p).unwrap();
            let rhs = alpha.abs().powf(p) * energy_dp(&g, &u, p).unwrap();
            prop_assert!(close(lhs, rhs, 1e-12), "p = {p}: {lhs} vs {rhs}");
        }
        for h in [Denominator::L2, Denominator::L1, Denominator::L1Median] {
            prop_assert!(close(h.value(&au), alpha.abs() * h.value(&u), 1e-12), "{h:?}");
        }
    }

    #[test]
    fn dp_at_one_is_j((g, u) in graph_and_vector()) {
        prop_assert!(close(energy_dp(&g, &u, 1.0).unwrap(), energy_j(&g.gradient(), &u).unwrap(), 1e-12));
    }

    #[test]
    fn denominator_subgradients_reproduce_the_value(u in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        for h in [Denominator::L2, Denominator::L1, Denominator::L1Median] {
            let q = h.subgradient(&u);
            prop_assert!(close(dot(&q, &u), h.value(&u), 1e-12), "{h:?}");
        }
        let q = Denominator::L1Median.subgradient(&u);
        prop_assert!(q.iter().sum::<f64>().abs() <= 1e-12 * u.len() as f64);
    }

    #[test]
    fn shifted_subgradient_is_orthogonal((g, u) in graph_and_vector()) {
        let d = g.degrees();
        let q = Denominator::L2.subgradient(&u);
        let qs = shifted_subgradient(&q, d);
        prop_assert!(dot(&qs, d).abs() <= 1e-12 * norm2(&q).max(1e-300) * norm2(d));
    }
}

#[test]
fn operator_norm_bounds_the_largest_singular_value() {
    for seed in 0..10 {
        let g = common::random_connected(5 + seed as usize * 3, 0.3, 500 + seed);
        let k = common::dense_k(&g);
        let dense = nalgebra::DMatrix::from_fn(g.m(), g.n(), |r, c| k[r][c]);
        let exact = dense.singular_values().max();
        let est = g.gradient().operator_norm(200);
        assert!(est >= exact * (1.0 - 1e-9), "seed {seed}: {est} < {exact}");
        assert!(est <= 1.06 * exact, "seed {seed}: {est} vs {exact}");
    }
}

#[test]
fn gradient_matches_dense_matrix() {
    let mut r = common::rng(3);
    for seed in 0..10 {
        let g = common::random_connected(12, 0.3, seed);
        let k = common::dense_k(&g);
        let u = common::random_vector(g.n(), &mut r);
        let ku = g.gradient().apply(&u).unwrap();
        for (row, v) in k.iter().zip(&ku) {
            assert!((dot(row, &u) - v).abs() <= 1e-14);
        }
    }
}

#[test]
fn knn_graph_is_symmetric_connected_and_positive() {
    let mut r = common::rng(11);
    let rows: Vec<Vec<f64>> = (0..60)
        .map(|i| {
            let centre = if i < 30 { 0.0 } else { 5.0 };
            (0..3).map(|_| centre + r.random_range(-1.0..1.0)).collect()
        })
        .collect();
    for bw in [Bandwidth::SelfTuning, Bandwidth::Fixed(1.0)] {
        let g = graph1l::build_knn_gaussian(&rows, 5, bw).unwrap();
        assert_eq!(g.n(), 60);
        assert!(g.edges().iter().all(|e| e.w > 0.0 && e.w <= 1.0 && e.i < e.j));
        // every node keeps at least its k nearest neighbours
        let mut count = vec![0usize; 60];
        for e in g.edges() {
            count[e.i] += 1;
            count[e.j] += 1;
        }
        assert!(count.iter().all(|&c| c >= 5));
        let recomputed = g.recompute_degrees();
        for (a, b) in recomputed.iter().zip(g.degrees()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
