//! Energies, denominators and Rayleigh ratios.
//!
//! `J(u) = ||K u||_1` counts each unordered edge once. The general
//! `D_p` energy follows the same convention, so `D_1 = J`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GradientOperator, WeightedGraph};
use crate::linalg::{dot, norm1, norm2, norm_inf, sign};

/// Default threshold on `||u||_2` below which a function counts as vanished.
pub const VANISH_TOL: f64 = 1e-12;

/// The one-homogeneous denominator `H` of the ratio `J/H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// `||u||_2`
    #[default]
    L2,
    /// `||u||_1`
    L1,
    /// `||u - median(u)||_1`
    L1Median,
}

impl FromStr for Denominator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Denominator::L2),
            "l1" => Ok(Denominator::L1),
            "l1med" | "l1_median" | "l1-median" => Ok(Denominator::L1Median),
            _ => Err(format!("unknown denominator '{s}' (expected l2, l1 or l1med)")),
        }
    }
}

impl Denominator {
    pub fn value(self, u: &[f64]) -> f64 {
        match self {
            Denominator::L2 => norm2(u),
            Denominator::L1 => norm1(u),
            Denominator::L1Median => {
                let m = lower_median(u);
                u.iter().map(|x| (x - m).abs()).sum()
            }
        }
    }

    /// An element `q` of the subdifferential of `H` at `u` with
    /// `<q, u> = H(u)`.
    ///
    /// Zero coordinates of `||.||_1` select 0. For the median variant the
    /// entries equal to the (lower) median share the value that makes
    /// `sum(q) = 0`; that is 0 whenever as many entries lie above the
    /// median as below it.
    pub fn subgradient(self, u: &[f64]) -> Vec<f64> {
        match self {
            Denominator::L2 => {
                let nu = norm2(u);
                if nu == 0.0 {
                    vec![0.0; u.len()]
                } else {
                    u.iter().map(|x| x / nu).collect()
                }
            }
            Denominator::L1 => u.iter().map(|&x| sign(x)).collect(),
            Denominator::L1Median => {
                let m = lower_median(u);
                let above = u.iter().filter(|&&x| x > m).count() as f64;
                let below = u.iter().filter(|&&x| x < m).count() as f64;
                let ties = u.len() as f64 - above - below;
                let at_median = if ties > 0.0 { (below - above) / ties } else { 0.0 };
                u.iter()
                    .map(|&x| if x == m { at_median } else { sign(x - m) })
                    .collect()
            }
        }
    }
}

/// Lower median; 0 for an empty slice.
pub fn lower_median(u: &[f64]) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    let mut v = u.to_vec();
    let mid = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// `J(u) = sum_e w_ij |u_i/d_i - u_j/d_j|`.
pub fn energy_j(op: &GradientOperator<'_>, u: &[f64]) -> Result<f64> {
    Ok(norm1(&op.apply(u)?))
}

/// `D_p(u) = sum_e w_ij |u_i/d_i^(1/p) - u_j/d_j^(1/p)|^p`, one term per
/// unordered edge.
pub fn energy_dp(graph: &WeightedGraph, u: &[f64], p: f64) -> Result<f64> {
    if u.len() != graph.n() {
        return Err(Error::DimensionMismatch {
            expected: graph.n(),
            got: u.len(),
        });
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidConfig(format!("D_p needs p >= 1, got {p}")));
    }
    let scale: Vec<f64> = graph.degrees().iter().map(|d| d.powf(1.0 / p)).collect();
    Ok(graph
        .edges()
        .iter()
        .map(|e| e.w * (u[e.i] / scale[e.i] - u[e.j] / scale[e.j]).abs().powf(p))
        .sum())
}

/// `q - (<d, q> / <d, d>) d`, the component of `q` orthogonal to `d`.
pub fn shifted_subgradient(q: &[f64], d: &[f64]) -> Vec<f64> {
    let coef = dot(d, q) / dot(d, d);
    q.iter().zip(d).map(|(qi, di)| qi - coef * di).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioValue {
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    pub vanished: bool,
}

/// `R(u) = J(u) / H(u)`; flagged as vanished, with `R = 0`, when
/// `||u||_2 < vanish_tol` or `H(u) <= vanish_tol`.
pub fn ratio(op: &GradientOperator<'_>, u: &[f64], kind: Denominator, vanish_tol: f64) -> Result<RatioValue> {
    let numerator = energy_j(op, u)?;
    let denominator = kind.value(u);
    let vanished = norm2(u) < vanish_tol || denominator <= vanish_tol;
    Ok(RatioValue {
        numerator,
        denominator,
        ratio: if vanished { 0.0 } else { numerator / denominator },
        vanished,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientCheck {
    /// `p = D^{-1} W^T z`
    pub p: Vec<f64>,
    /// `||z||_inf <= 1 + tol`
    pub dual_feasible: bool,
    /// `|<p, d>| <= tol ||p|| ||d||`
    pub orthogonal: bool,
}

/// Maps a dual edge vector to the node-space element `D^{-1} W^T z` of
/// `dJ` and checks the two conditions every such element satisfies.
pub fn verify_subgradient(op: &GradientOperator<'_>, z: &[f64], tol: f64) -> Result<SubgradientCheck> {
    let p = op.adjoint(z)?;
    let d = op.graph().degrees();
    let orthogonal = dot(&p, d).abs() <= tol * norm2(&p) * norm2(d);
    Ok(SubgradientCheck {
        dual_feasible: norm_inf(z) <= 1.0 + tol,
        orthogonal,
        p,
    })
}
