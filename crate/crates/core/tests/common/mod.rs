//! Graph generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use graph1l::prox::ConstraintSpec;
use graph1l::{MultiClassState, WeightedGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected graph: a random spanning tree plus each remaining pair with
/// probability `p`; weights uniform in `[0.1, 1]`.
pub fn random_connected(n: usize, p: f64, seed: u64) -> WeightedGraph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for v in 1..n {
        let u = r.random_range(0..v);
        edges.push((u, v, r.random_range(0.1..1.0)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(p) {
                edges.push((i, j, r.random_range(0.1..1.0)));
            }
        }
    }
    // duplicates are merged by summing, which keeps weights positive
    WeightedGraph::from_edges(n, edges).unwrap()
}

/// Two dense blocks of sizes `a` and `n - a` joined by a few weak edges.
pub fn planted_bipartition(n: usize, a: usize, seed: u64) -> WeightedGraph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    let side = |x: usize| x < a;
    for i in 0..n {
        for j in i + 1..n {
            if side(i) == side(j) {
                if r.random_bool(0.8) || j == i + 1 {
                    edges.push((i, j, r.random_range(0.5..1.0)));
                }
            } else if r.random_bool(0.1) {
                edges.push((i, j, r.random_range(0.01..0.1)));
            }
        }
    }
    edges.push((a - 1, a, 0.05));
    WeightedGraph::from_edges(n, edges).unwrap()
}

/// `K3 + K3` with unit weights, joined by one edge of weight 0.01.
pub fn two_cliques() -> WeightedGraph {
    WeightedGraph::from_edges(
        6,
        [
            (0, 1, 1.0),
            (1, 2, 1.0),
            (0, 2, 1.0),
            (3, 4, 1.0),
            (4, 5, 1.0),
            (3, 5, 1.0),
            (2, 3, 0.01),
        ],
    )
    .unwrap()
}

pub fn random_vector(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Dense copy of `K = W D^{-1}` (one row per stored edge).
pub fn dense_k(g: &WeightedGraph) -> Vec<Vec<f64>> {
    let d = g.degrees();
    g.edges()
        .iter()
        .map(|e| {
            let mut row = vec![0.0; g.n()];
            row[e.i] = e.w / d[e.i];
            row[e.j] = -e.w / d[e.j];
            row
        })
        .collect()
}

/// `min_u 1/(2 dt) ||u - a||^2 + ||K u||_1 (+ chi_C)` through its dual
/// `max_{|z| <= 1} min_{u in C} ...`, solved by projected gradient ascent
/// on the dual box with many small steps. Returns the primal objective
/// of the induced primal point.
pub fn brute_force_prox(
    g: &WeightedGraph,
    anchor: &MultiClassState,
    dt: f64,
    constraint: &ConstraintSpec,
    iters: usize,
) -> (MultiClassState, f64) {
    let k = dense_k(g);
    let (n, m, classes) = (g.n(), g.m(), anchor.classes());
    let lip: f64 = k.iter().flatten().map(|v| v * v).sum::<f64>() * dt;
    let step = 1.0 / lip.max(1e-300);
    let mut z = vec![0.0; m * classes];
    let induced = |z: &[f64]| {
        let mut u = anchor.clone();
        for l in 0..classes {
            for (e, row) in k.iter().enumerate() {
                for x in 0..n {
                    let v = u.get(x, l) - dt * row[x] * z[l * m + e];
                    u.set(x, l, v);
                }
            }
        }
        constraint.project_in_place(&mut u);
        u
    };
    for _ in 0..iters {
        let u = induced(&z);
        for l in 0..classes {
            for (e, row) in k.iter().enumerate() {
                let ku: f64 = (0..n).map(|x| row[x] * u.get(x, l)).sum();
                let zi = &mut z[l * m + e];
                *zi = (*zi + step * ku).clamp(-1.0, 1.0);
            }
        }
    }
    let u = induced(&z);
    let value = prox_objective(g, &u, anchor, dt);
    (u, value)
}

/// `1/(2 dt) ||u - a||^2 + sum_l ||K u_l||_1`.
pub fn prox_objective(g: &WeightedGraph, u: &MultiClassState, anchor: &MultiClassState, dt: f64) -> f64 {
    let op = g.gradient();
    let quad: f64 = u
        .as_slice()
        .iter()
        .zip(anchor.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / (2.0 * dt);
    let tv: f64 = u
        .columns()
        .map(|c| op.apply(c).unwrap().iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    quad + tv
}

/// Single-edge prox by grid search over the one dual variable.
pub fn single_edge_grid(g: &WeightedGraph, a: &[f64], dt: f64, points: usize) -> f64 {
    assert_eq!(g.m(), 1);
    let k = &dense_k(g)[0];
    let mut best = f64::INFINITY;
    for s in 0..=points {
        let z = -1.0 + 2.0 * s as f64 / points as f64;
        let u: Vec<f64> = a.iter().zip(k).map(|(ai, ki)| ai - dt * ki * z).collect();
        let ku: f64 = u.iter().zip(k).map(|(x, y)| x * y).sum();
        let value = a.iter().zip(&u).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / (2.0 * dt) + ku.abs();
        best = best.min(value);
    }
    best
}

/// Bivalued d-orthogonal function of a bipartition: `d * (1_A - c)`.
///
/// Its quotient `J / H` is the cut of `A` over `H(d * (1_A - c))`.
pub fn bivalued(g: &WeightedGraph, in_a: &[bool]) -> Vec<f64> {
    let d = g.degrees();
    let dd: f64 = d.iter().map(|v| v * v).sum();
    let c = d.iter().zip(in_a).filter(|(_, a)| **a).map(|(v, _)| v * v).sum::<f64>() / dd;
    d.iter()
        .zip(in_a)
        .map(|(v, &a)| v * (f64::from(u8::from(a)) - c))
        .collect()
}

/// Exhaustive minimum of the bivalued quotient over all bipartitions.
pub fn best_bipartition(g: &WeightedGraph, kind: graph1l::Denominator) -> (f64, Vec<bool>) {
    let n = g.n();
    let op = g.gradient();
    let mut best = (f64::INFINITY, vec![]);
    // node n-1 is pinned outside A so each bipartition is visited once
    for mask in 1u64..(1 << (n - 1)) {
        let in_a: Vec<bool> = (0..n).map(|x| mask >> x & 1 == 1).collect();
        let u = bivalued(g, &in_a);
        let r = graph1l::ratio(&op, &u, kind, 1e-300).unwrap().ratio;
        if r < best.0 {
            best = (r, in_a);
        }
    }
    best
}

/// Dense LGC fixed point `(1 - alpha) (I - alpha S)^{-1} Y` via nalgebra.
pub fn dense_lgc(g: &WeightedGraph, y: &MultiClassState, alpha: f64) -> MultiClassState {
    let n = g.n();
    let d = g.degrees();
    let mut a = nalgebra::DMatrix::<f64>::identity(n, n);
    for e in g.edges() {
        let s = alpha * e.w / (d[e.i] * d[e.j]).sqrt();
        a[(e.i, e.j)] -= s;
        a[(e.j, e.i)] -= s;
    }
    let lu = a.lu();
    let mut out = MultiClassState::zeros(n, y.classes());
    for l in 0..y.classes() {
        let rhs = nalgebra::DVector::from_column_slice(y.column(l));
        let sol = lu.solve(&rhs).unwrap() * (1.0 - alpha);
        out.column_mut(l).copy_from_slice(sol.as_slice());
    }
    out
}
