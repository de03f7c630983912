//! Weighted undirected graphs and the degree-normalized gradient operator.
//!
//! Every function `u` on the nodes is mapped to one value per edge,
//!
//! ```text
//! (K u)_e = w_ij (u_i / d_i - u_j / d_j),   e = (i, j), i < j
//! ```
//!
//! so that `J(u) = ||K u||_1` is the normalized graph total variation.
//! `K` annihilates the degree vector `d` and its adjoint maps dual edge
//! variables back to node space as `D^{-1} W^T z`.

mod io;
mod knn;

pub use io::{read_edge_list, read_features, write_edge_list};
pub use knn::{build_knn_gaussian, Bandwidth};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};

/// One undirected edge, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// A validated weighted graph: strictly positive weights, no self-loops,
/// no duplicate pairs, no isolated nodes.
///
/// Edges are kept sorted by `(i, j)` and every operator walks them in that
/// order, so results are bit-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    degrees: Vec<f64>,
}

impl WeightedGraph {
    /// Builds a graph from `(i, j, w)` triples. Entries naming the same
    /// unordered pair are merged by summing their weights.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut list = Vec::new();
        for (a, b, w) in edges {
            for index in [a, b] {
                if index >= n {
                    return Err(Error::BadIndex { index, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWeight { i: a, j: b, w });
            }
            list.push(Edge {
                i: a.min(b),
                j: a.max(b),
                w,
            });
        }
        list.sort_by_key(|x| (x.i, x.j));

        let mut merged: Vec<Edge> = Vec::with_capacity(list.len());
        for e in list {
            match merged.last_mut() {
                Some(last) if last.i == e.i && last.j == e.j => last.w += e.w,
                _ => merged.push(e),
            }
        }

        let degrees = degrees_of(n, &merged);
        if let Some(isolated) = degrees.iter().position(|&d| d <= 0.0) {
            return Err(Error::IsolatedNode(isolated));
        }
        Ok(Self {
            n,
            edges: merged,
            degrees,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Degrees recomputed from the edge list in storage order.
    pub fn recompute_degrees(&self) -> Vec<f64> {
        degrees_of(self.n, &self.edges)
    }

    /// Same topology with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_edges(self.n, self.edges.iter().map(|e| (e.i, e.j, e.w * factor)))
    }

    pub fn gradient(&self) -> GradientOperator<'_> {
        GradientOperator { graph: self }
    }
}

fn degrees_of(n: usize, edges: &[Edge]) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for e in edges {
        d[e.i] += e.w;
        d[e.j] += e.w;
    }
    d
}

/// The linear map `K = W D^{-1}` from node functions to edge differences.
#[derive(Debug, Clone, Copy)]
pub struct GradientOperator<'g> {
    graph: &'g WeightedGraph,
}

impl<'g> GradientOperator<'g> {
    pub fn graph(&self) -> &'g WeightedGraph {
        self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n
    }

    pub fn m(&self) -> usize {
        self.graph.edges.len()
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), u.len())?;
        let mut out = vec![0.0; self.m()];
        self.apply_into(u, &mut out);
        Ok(out)
    }

    pub fn adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m(), z.len())?;
        let mut out = vec![0.0; self.n()];
        self.adjoint_into(z, &mut out);
        Ok(out)
    }

    /// `out[e] = w_ij (u_i/d_i - u_j/d_j)`. Lengths are the caller's
    /// responsibility.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let d = &self.graph.degrees;
        for (o, e) in out.iter_mut().zip(&self.graph.edges) {
            *o = e.w * (u[e.i] / d[e.i] - u[e.j] / d[e.j]);
        }
    }

    /// `out = D^{-1} W^T z`, accumulated in edge order.
    pub fn adjoint_into(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (&ze, e) in z.iter().zip(&self.graph.edges) {
            let flow = e.w * ze;
            out[e.i] += flow;
            out[e.j] -= flow;
        }
        for (o, &d) in out.iter_mut().zip(&self.graph.degrees) {
            *o /= d;
        }
    }

    /// Upper estimate of `||K||_2`: power iteration on `K^T K` followed by
    /// a 5% inflation.
    ///
    /// The start vector is the ramp `(1, 2, ..., n)` with its component
    /// along `d` removed (`d` spans the kernel of `K`), so the result is
    /// deterministic.
    pub fn operator_norm(&self, iters: usize) -> f64 {
        let n = self.n();
        let d = self.graph.degrees();
        let mut v: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        deflate(&mut v, d);
        let mut nv = norm2(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);

        let mut kv = vec![0.0; self.m()];
        let mut w = vec![0.0; n];
        let mut sigma2 = 0.0;
        for _ in 0..iters.max(1) {
            self.apply_into(&v, &mut kv);
            self.adjoint_into(&kv, &mut w);
            sigma2 = dot(&v, &w);
            nv = norm2(&w);
            if nv == 0.0 {
                break;
            }
            v.iter_mut().zip(&w).for_each(|(x, &y)| *x = y / nv);
        }
        1.05 * sigma2.max(0.0).sqrt()
    }
}

fn deflate(v: &mut [f64], d: &[f64]) {
    let coef = dot(v, d) / dot(d, d);
    v.iter_mut().zip(d).for_each(|(x, &di)| *x -= coef * di);
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
