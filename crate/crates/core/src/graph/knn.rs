use std::collections::BTreeMap;
use std::str::FromStr;

use super::WeightedGraph;
use crate::error::{Error, Result};

/// Gaussian bandwidth rule for k-NN graphs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `sigma_i` is the distance from node `i` to its k-th neighbor.
    SelfTuning,
    /// One global `sigma`; weights become `exp(-dist^2 / sigma^2)`.
    Fixed(f64),
}

impl FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("self") {
            return Ok(Bandwidth::SelfTuning);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Bandwidth::Fixed(v)),
            _ => Err(format!("bandwidth must be 'self' or a positive number, got '{s}'")),
        }
    }
}

/// Exact k-nearest-neighbor graph with Gaussian weights
/// `w_ij = exp(-|x_i - x_j|^2 / (sigma_i sigma_j))`, symmetrized by keeping
/// the larger weight of each unordered pair.
///
/// Ties in distance are broken by node index. Weights that underflow are
/// floored at the smallest positive normal float so the graph always
/// validates.
pub fn build_knn_gaussian(features: &[Vec<f64>], k: usize, bandwidth: Bandwidth) -> Result<WeightedGraph> {
    let n = features.len();
    if n < 2 || k == 0 || k >= n {
        return Err(Error::DegenerateFeatures { n, k });
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|row| row.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }

    // neighbors[i] = k nearest (distance, index), nearest first
    let mut neighbors: Vec<Vec<(f64, usize)>> = Vec::with_capacity(n);
    let mut row = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        for j in (0..n).filter(|&j| j != i) {
            row.push((sq_dist(&features[i], &features[j]).sqrt(), j));
        }
        row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        neighbors.push(row[..k].to_vec());
    }

    let sigma: Vec<f64> = match bandwidth {
        Bandwidth::Fixed(s) => vec![s; n],
        Bandwidth::SelfTuning => neighbors.iter().map(|nb| self_tuning_scale(nb)).collect(),
    };

    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, nb) in neighbors.iter().enumerate() {
        for &(dist, j) in nb {
            let w = if dist == 0.0 {
                1.0
            } else {
                (-(dist * dist) / (sigma[i] * sigma[j])).exp().max(f64::MIN_POSITIVE)
            };
            let slot = weights.entry((i.min(j), i.max(j))).or_insert(0.0);
            *slot = slot.max(w);
        }
    }
    WeightedGraph::from_edges(n, weights.into_iter().map(|((i, j), w)| (i, j, w)))
}

// Distance to the k-th neighbor; when that is zero (duplicated points) fall
// back to the nearest positive distance, then to 1.
fn self_tuning_scale(nb: &[(f64, usize)]) -> f64 {
    let kth = nb.last().map_or(0.0, |p| p.0);
    if kth > 0.0 {
        return kth;
    }
    nb.iter().map(|p| p.0).find(|&d| d > 0.0).unwrap_or(1.0)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_give_unit_weight() {
        let g = build_knn_gaussian(&[vec![1.0, 2.0], vec![1.0, 2.0]], 1, Bandwidth::SelfTuning).unwrap();
        assert_eq!(g.m(), 1);
        assert_eq!(g.edges()[0].w, 1.0);
    }

    #[test]
    fn collinear_points_fixed_sigma() {
        let x = [vec![0.0], vec![1.0], vec![10.0]];
        let g = build_knn_gaussian(&x, 1, Bandwidth::Fixed(1.0)).unwrap();
        assert_eq!(g.m(), 2);
        let e = g.edges();
        assert_eq!((e[0].i, e[0].j), (0, 1));
        assert!((e[0].w - (-1f64).exp()).abs() < 1e-15);
        assert_eq!((e[1].i, e[1].j), (1, 2));
        assert!((e[1].w - (-81f64).exp()).abs() < 1e-45);
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(build_knn_gaussian(&[vec![0.0]], 1, Bandwidth::SelfTuning).is_err());
        assert!(build_knn_gaussian(&[vec![0.0], vec![1.0]], 2, Bandwidth::SelfTuning).is_err());
        assert!(build_knn_gaussian(&[vec![0.0], vec![1.0]], 0, Bandwidth::SelfTuning).is_err());
    }

    #[test]
    fn all_identical_rows_are_allowed() {
        let x = vec![vec![3.0, 3.0]; 5];
        let g = build_knn_gaussian(&x, 2, Bandwidth::SelfTuning).unwrap();
        assert!(g.edges().iter().all(|e| e.w == 1.0));
    }

    #[test]
    fn far_points_do_not_underflow_to_zero() {
        let x = [vec![0.0], vec![1.0], vec![1e6]];
        let g = build_knn_gaussian(&x, 1, Bandwidth::Fixed(1.0)).unwrap();
        assert!(g.edges().iter().all(|e| e.w > 0.0));
    }

    #[test]
    fn bandwidth_parses() {
        assert_eq!("self".parse::<Bandwidth>().unwrap(), Bandwidth::SelfTuning);
        assert_eq!("0.5".parse::<Bandwidth>().unwrap(), Bandwidth::Fixed(0.5));
        assert!("-1".parse::<Bandwidth>().is_err());
    }
}
