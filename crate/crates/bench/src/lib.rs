//! Synthetic inputs for the benchmarks.

use graph1l::{LabelPrior, WeightedGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `clusters` blocks of `size` nodes. Each node links to `degree` random
/// nodes of its own block (weight in `[0.5, 1)`) and, with probability
/// `leak`, to one node of another block (weight in `[0.01, 0.1)`). A ring
/// through all nodes keeps the graph connected.
pub fn clustered_graph(clusters: usize, size: usize, degree: usize, leak: f64, seed: u64) -> WeightedGraph {
    let n = clusters * size;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize, f64)> = (0..n).map(|x| (x, (x + 1) % n, 0.5)).collect();
    for x in 0..n {
        let block = x / size;
        for _ in 0..degree {
            let y = block * size + r.random_range(0..size);
            if y != x {
                edges.push((x, y, r.random_range(0.5..1.0)));
            }
        }
        if r.random_bool(leak) {
            let y = r.random_range(0..n);
            if y / size != block {
                edges.push((x, y, r.random_range(0.01..0.1)));
            }
        }
    }
    WeightedGraph::from_edges(n, edges).expect("ring keeps every node connected")
}

/// `per_class` labeled nodes at the start of every block of `clustered_graph`.
pub fn block_prior(clusters: usize, size: usize, per_class: usize) -> LabelPrior {
    let assignments = (0..clusters).flat_map(|c| (0..per_class).map(move |i| (c * size + i, c)));
    LabelPrior::new(clusters * size, clusters, assignments).expect("every block is labeled")
}
