//! Quadratic (p = 2) comparators: local-and-global-consistency diffusion
//! and harmonic label propagation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Labeling;
use crate::graph::WeightedGraph;
use crate::state::{LabelPrior, MultiClassState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Diffusion weight in `(0, 1)`; only used by LGC.
    pub alpha: f64,
    pub max_iter: usize,
    /// Stop once `||F_{t+1} - F_t||_inf <= tol`.
    pub tol: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            max_iter: 200_000,
            tol: 1e-10,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("diffusion needs max_iter >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

fn one_hot(prior: &LabelPrior) -> MultiClassState {
    let mut y = MultiClassState::zeros(prior.n(), prior.classes());
    for (x, l) in prior.assignments() {
        y.set(x, l, 1.0);
    }
    y
}

fn check_prior(graph: &WeightedGraph, prior: &LabelPrior) -> Result<()> {
    if prior.n() != graph.n() {
        return Err(Error::DimensionMismatch {
            expected: graph.n(),
            got: prior.n(),
        });
    }
    Ok(())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// LGC score matrix: fixed point of `F = alpha S F + (1 - alpha) Y` with
/// `S = D^{-1/2} A D^{-1/2}`, iterated from `F_0 = Y`.
pub fn lgc_scores(graph: &WeightedGraph, prior: &LabelPrior, cfg: &DiffusionConfig) -> Result<MultiClassState> {
    cfg.validate()?;
    check_prior(graph, prior)?;
    let n = graph.n();
    let sqrt_d: Vec<f64> = graph.degrees().iter().map(|d| d.sqrt()).collect();
    let coef: Vec<f64> = graph
        .edges()
        .iter()
        .map(|e| e.w / (sqrt_d[e.i] * sqrt_d[e.j]))
        .collect();

    let y = one_hot(prior);
    let mut f = y.clone();
    let mut next = MultiClassState::zeros(n, prior.classes());
    for _ in 0..cfg.max_iter {
        for l in 0..prior.classes() {
            let (src, yl) = (f.column(l), y.column(l));
            let dst = next.column_mut(l);
            dst.iter_mut().for_each(|v| *v = 0.0);
            for (e, &c) in graph.edges().iter().zip(&coef) {
                dst[e.i] += c * src[e.j];
                dst[e.j] += c * src[e.i];
            }
            for (v, &t) in dst.iter_mut().zip(yl) {
                *v = cfg.alpha * *v + (1.0 - cfg.alpha) * t;
            }
        }
        let change = max_abs_diff(next.as_slice(), f.as_slice());
        std::mem::swap(&mut f, &mut next);
        if change <= cfg.tol {
            return Ok(f);
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        gap: max_abs_diff(next.as_slice(), f.as_slice()),
    })
}

/// Harmonic label propagation scores: unlabeled rows repeatedly replaced
/// by the degree-weighted average of their neighbors, labeled rows held at
/// their one-hot prior.
pub fn label_propagation_scores(
    graph: &WeightedGraph,
    prior: &LabelPrior,
    cfg: &DiffusionConfig,
) -> Result<MultiClassState> {
    if cfg.max_iter == 0 || !(cfg.tol > 0.0) {
        return Err(Error::InvalidConfig("diffusion needs max_iter >= 1 and tol > 0".into()));
    }
    check_prior(graph, prior)?;
    let n = graph.n();
    let d = graph.degrees();
    let mut f = one_hot(prior);
    let mut next = f.clone();
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        for l in 0..prior.classes() {
            let src = f.column(l);
            let dst = next.column_mut(l);
            dst.iter_mut().for_each(|v| *v = 0.0);
            for e in graph.edges() {
                dst[e.i] += e.w * src[e.j];
                dst[e.j] += e.w * src[e.i];
            }
            for x in 0..n {
                dst[x] = match prior.class_of(x) {
                    Some(c) => f64::from(u8::from(c == l)),
                    None => dst[x] / d[x],
                };
            }
        }
        change = max_abs_diff(next.as_slice(), f.as_slice());
        std::mem::swap(&mut f, &mut next);
        if change <= cfg.tol {
            return Ok(f);
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        gap: change,
    })
}

/// Row argmax (ties to the lowest class); soft labels are the rows
/// rescaled to sum to one, uniform for all-zero rows.
pub fn decode_scores(scores: &MultiClassState) -> Labeling {
    let classes = scores.classes();
    let mut hard = Vec::with_capacity(scores.n());
    let mut soft = Vec::with_capacity(scores.n());
    for x in 0..scores.n() {
        let row = scores.row(x);
        let mut best = 0;
        for l in 1..classes {
            if row[l] > row[best] {
                best = l;
            }
        }
        hard.push(best);
        let pos: Vec<f64> = row.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = pos.iter().sum();
        soft.push(if total > 0.0 {
            pos.iter().map(|v| v / total).collect()
        } else {
            vec![1.0 / classes as f64; classes]
        });
    }
    Labeling { hard, soft }
}

pub fn run_lgc(graph: &WeightedGraph, prior: &LabelPrior, cfg: &DiffusionConfig) -> Result<Labeling> {
    Ok(decode_scores(&lgc_scores(graph, prior, cfg)?))
}

pub fn run_label_propagation(graph: &WeightedGraph, prior: &LabelPrior, cfg: &DiffusionConfig) -> Result<Labeling> {
    Ok(decode_scores(&label_propagation_scores(graph, prior, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lgc_unit_edge_closed_form() {
        // S = [[0,1],[1,0]], Y = e_0 in class 0 (one class besides an
        // unlabeled second class is not allowed, so use L = 1).
        let g = WeightedGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let prior = LabelPrior::new(2, 1, [(0, 0)]).unwrap();
        let cfg = DiffusionConfig {
            alpha: 0.5,
            ..DiffusionConfig::default()
        };
        let f = lgc_scores(&g, &prior, &cfg).unwrap();
        // (1 - a) (I - a S)^{-1} e_0 = (1 - a)/(1 - a^2) (1, a)
        let s = 0.5 / 0.75;
        assert!((f.get(0, 0) - s).abs() < 1e-9);
        assert!((f.get(1, 0) - s * 0.5).abs() < 1e-9);
        assert_eq!(run_lgc(&g, &prior, &cfg).unwrap().hard, vec![0, 0]);
    }

    #[test]
    fn lgc_small_alpha_returns_prior() {
        let g = WeightedGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let prior = LabelPrior::new(3, 3, [(0, 2), (1, 0), (2, 1)]).unwrap();
        let cfg = DiffusionConfig {
            alpha: 1e-6,
            ..DiffusionConfig::default()
        };
        assert_eq!(run_lgc(&g, &prior, &cfg).unwrap().hard, vec![2, 0, 1]);
    }

    #[test]
    fn lp_path_tie_breaks_low() {
        let g = WeightedGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let prior = LabelPrior::new(3, 2, [(0, 0), (2, 1)]).unwrap();
        let f = label_propagation_scores(&g, &prior, &DiffusionConfig::default()).unwrap();
        assert_eq!(f.row(1), vec![0.5, 0.5]);
        let lab = run_label_propagation(&g, &prior, &DiffusionConfig::default()).unwrap();
        assert_eq!(lab.hard, vec![0, 0, 1]);
        assert_eq!(lab.soft[1], vec![0.5, 0.5]);
    }

    #[test]
    fn lp_all_labeled_returns_prior() {
        let g = WeightedGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let prior = LabelPrior::new(3, 2, [(0, 1), (1, 0), (2, 1)]).unwrap();
        let lab = run_label_propagation(&g, &prior, &DiffusionConfig::default()).unwrap();
        assert_eq!(lab.hard, vec![1, 0, 1]);
    }

    #[test]
    fn alpha_is_validated() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let prior = LabelPrior::new(2, 1, [(0, 0)]).unwrap();
        let cfg = DiffusionConfig {
            alpha: 1.0,
            ..DiffusionConfig::default()
        };
        assert!(run_lgc(&g, &prior, &cfg).is_err());
    }
}
