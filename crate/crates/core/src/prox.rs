//! Per-step convex subproblems of the flows.
//!
//! Every outer step minimizes, for one or several class functions,
//!
//! ```text
//! F(U) = 1/(2 dt) ||U - U_k||^2 - sum_l R_l <qs_l, u_l> + sum_l J(u_l) + chi_C(U)
//! ```
//!
//! Completing the square turns this into the proximal map of `dt * J`
//! (plus the indicator of `C`) evaluated at the anchor
//! `A = U_k + dt * R * qs`. It is solved with a first-order primal-dual
//! iteration on the saddle problem
//!
//! ```text
//! min_U max_{|z|_inf <= 1}  1/(2 dt) ||U - A||^2 + chi_C(U) + <z, K U>
//! ```
//!
//! The quadratic and the constraint share one primal proximal step: the
//! quadratic is isotropic, so its constrained minimizer is the exact
//! Euclidean projection onto `C` of the unconstrained one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GradientOperator;
use crate::linalg::{dot, norm1};
use crate::state::{LabelPrior, MultiClassState};

/// Power iterations used to size the primal-dual steps.
const NORM_ITERS: usize = 300;
/// The duality gap is evaluated every this many iterations.
const GAP_CHECK_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub gap_tol: f64,
    /// Target for `tau * sigma * ||K||^2`, in `(0, 1]`.
    pub step_ratio: f64,
    /// Shrink the primal step (and grow the dual one) using the strong
    /// convexity `1/dt` of the quadratic. Fixed steps when `false`.
    pub accelerated: bool,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            rel_tol: 1e-8,
            gap_tol: 1e-7,
            step_ratio: 0.99,
            accelerated: true,
        }
    }
}

impl InnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("inner max_iter must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) || !(self.gap_tol > 0.0) {
            return Err(Error::InvalidConfig("inner tolerances must be positive".into()));
        }
        if !(self.step_ratio > 0.0 && self.step_ratio <= 1.0) {
            return Err(Error::InvalidConfig("step_ratio must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// The coupling constraint `C` between class functions.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    None,
    /// `sum_l u_l(x) = 0` at every node.
    SumZero,
    /// Sum-zero on unlabeled nodes; on a node labeled `l`,
    /// `u_l(x) >= epsilon` and `u_l'(x) <= -epsilon` for `l' != l`.
    Transductive {
        prior: LabelPrior,
        epsilon: f64,
    },
}

impl ConstraintSpec {
    pub fn transductive(prior: LabelPrior, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(ConstraintSpec::Transductive { prior, epsilon })
    }

    /// Exact Euclidean projection of a column-major `n x classes` array.
    fn project_slice(&self, data: &mut [f64], n: usize, classes: usize) {
        match self {
            ConstraintSpec::None => {}
            ConstraintSpec::SumZero => {
                for x in 0..n {
                    center_node(data, n, classes, x);
                }
            }
            ConstraintSpec::Transductive { prior, epsilon } => {
                for x in 0..n {
                    match prior.class_of(x) {
                        None => center_node(data, n, classes, x),
                        Some(own) => {
                            for l in 0..classes {
                                let v = &mut data[l * n + x];
                                *v = if l == own { v.max(*epsilon) } else { v.min(-*epsilon) };
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn project_in_place(&self, u: &mut MultiClassState) {
        let (n, classes) = (u.n(), u.classes());
        self.project_slice(u.as_mut_slice(), n, classes);
    }

    /// Largest violation: `|sum_l u_l(x)|` on sum-zero nodes and the clamp
    /// shortfall on labeled nodes.
    pub fn violation(&self, u: &MultiClassState) -> f64 {
        let node_sum = |x: usize| (0..u.classes()).map(|l| u.get(x, l)).sum::<f64>().abs();
        match self {
            ConstraintSpec::None => 0.0,
            ConstraintSpec::SumZero => (0..u.n()).map(node_sum).fold(0.0, f64::max),
            ConstraintSpec::Transductive { prior, epsilon } => (0..u.n())
                .map(|x| match prior.class_of(x) {
                    None => node_sum(x),
                    Some(own) => (0..u.classes())
                        .map(|l| {
                            let v = u.get(x, l);
                            if l == own {
                                (epsilon - v).max(0.0)
                            } else {
                                (v + epsilon).max(0.0)
                            }
                        })
                        .fold(0.0, f64::max),
                })
                .fold(0.0, f64::max),
        }
    }

    pub fn prior(&self) -> Option<&LabelPrior> {
        match self {
            ConstraintSpec::Transductive { prior, .. } => Some(prior),
            _ => None,
        }
    }
}

fn center_node(data: &mut [f64], n: usize, classes: usize, x: usize) {
    let mean = (0..classes).map(|l| data[l * n + x]).sum::<f64>() / classes as f64;
    for l in 0..classes {
        data[l * n + x] -= mean;
    }
}

/// Projection of `u` onto the coupling constraint.
pub fn project_coupling(u: &MultiClassState, constraint: &ConstraintSpec) -> MultiClassState {
    let mut out = u.clone();
    constraint.project_in_place(&mut out);
    out
}

/// Result of one inner solve.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub u: MultiClassState,
    /// Dual edge variables, column-major `m x classes`, `|z|_inf <= 1`.
    pub z: Vec<f64>,
    pub iterations: usize,
    /// Primal-dual gap at the returned pair.
    pub gap: f64,
    /// Stopped on the relative-change test, or `gap <= 10 * gap_tol`.
    pub converged: bool,
}

/// Primal-dual solver bound to one graph; the operator norm is computed once.
#[derive(Debug, Clone)]
pub struct PrimalDualSolver<'g> {
    op: GradientOperator<'g>,
    norm: f64,
}

impl<'g> PrimalDualSolver<'g> {
    pub fn new(op: GradientOperator<'g>) -> Self {
        let norm = op.operator_norm(NORM_ITERS);
        Self { op, norm }
    }

    pub fn operator(&self) -> GradientOperator<'g> {
        self.op
    }

    pub fn operator_norm(&self) -> f64 {
        self.norm
    }

    /// Minimizes `1/(2 dt) ||U - anchor||^2 + sum_l J(u_l) + chi_C(U)`.
    ///
    /// `warm_dual` (column-major `m x classes`) seeds the dual variable;
    /// the primal start is the minimizer induced by that dual.
    pub fn solve(
        &self,
        anchor: &MultiClassState,
        warm_dual: Option<&[f64]>,
        dt: f64,
        constraint: &ConstraintSpec,
        cfg: &InnerConfig,
    ) -> InnerSolution {
        let (n, classes, m) = (anchor.n(), anchor.classes(), self.op.m());
        let f = anchor.as_slice();

        let mut z = match warm_dual {
            Some(w) if w.len() == m * classes => w.iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
            _ => vec![0.0; m * classes],
        };
        let mut ktz = vec![0.0; n * classes];
        self.adjoint_all(&z, &mut ktz, n, m, classes);

        let mut u = vec![0.0; n * classes];
        self.induced_primal(f, &ktz, dt, constraint, n, classes, &mut u);

        if m == 0 {
            return InnerSolution {
                u: state_from(u, n, classes),
                z,
                iterations: 0,
                gap: 0.0,
                converged: true,
            };
        }

        let mut ubar = u.clone();
        let mut u_prev = vec![0.0; n * classes];
        let mut ku = vec![0.0; m * classes];
        let mut scratch = vec![0.0; n * classes];
        let step = if self.norm > 0.0 {
            cfg.step_ratio / self.norm
        } else {
            1.0
        };
        let (mut tau, mut sigma) = (step, step);

        let mut gap = f64::INFINITY;
        let mut iterations = 0;
        let mut stalled = false;
        for it in 1..=cfg.max_iter {
            iterations = it;
            self.apply_all(&ubar, &mut ku, n, m, classes);
            for (zi, &k) in z.iter_mut().zip(&ku) {
                *zi = (*zi + sigma * k).clamp(-1.0, 1.0);
            }
            self.adjoint_all(&z, &mut ktz, n, m, classes);

            u_prev.copy_from_slice(&u);
            let tau_used = tau;
            let c = tau / (dt + tau);
            for ((ui, &up), (&k, &fi)) in u.iter_mut().zip(&u_prev).zip(ktz.iter().zip(f)) {
                *ui = up + c * (fi - up - dt * k);
            }
            constraint.project_slice(&mut u, n, classes);

            let theta = if cfg.accelerated {
                1.0 / (1.0 + 2.0 * tau / dt).sqrt()
            } else {
                1.0
            };
            tau *= theta;
            sigma /= theta;
            for ((b, &ui), &up) in ubar.iter_mut().zip(&u).zip(&u_prev) {
                *b = ui + theta * (ui - up);
            }

            // the accelerated primal step shrinks like 1/k, so its change is
            // measured relative to the step actually taken
            let change = crate::linalg::dist2(&u, &u_prev);
            let scale = crate::linalg::norm2(&u_prev).max(f64::MIN_POSITIVE);
            stalled = change <= cfg.rel_tol * scale * (tau_used / step);
            if stalled || it % GAP_CHECK_EVERY == 0 || it == cfg.max_iter {
                gap = self.gap(&u, f, &ktz, dt, constraint, n, classes, &mut ku, &mut scratch);
                if gap <= cfg.gap_tol || stalled {
                    break;
                }
            }
        }

        InnerSolution {
            u: state_from(u, n, classes),
            z,
            iterations,
            gap,
            converged: stalled || gap <= 10.0 * cfg.gap_tol,
        }
    }

    fn apply_all(&self, u: &[f64], out: &mut [f64], n: usize, m: usize, classes: usize) {
        for l in 0..classes {
            self.op.apply_into(&u[l * n..(l + 1) * n], &mut out[l * m..(l + 1) * m]);
        }
    }

    fn adjoint_all(&self, z: &[f64], out: &mut [f64], n: usize, m: usize, classes: usize) {
        for l in 0..classes {
            self.op
                .adjoint_into(&z[l * m..(l + 1) * m], &mut out[l * n..(l + 1) * n]);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn induced_primal(
        &self,
        f: &[f64],
        ktz: &[f64],
        dt: f64,
        constraint: &ConstraintSpec,
        n: usize,
        classes: usize,
        out: &mut [f64],
    ) {
        for ((o, &fi), &k) in out.iter_mut().zip(f).zip(ktz) {
            *o = fi - dt * k;
        }
        constraint.project_slice(out, n, classes);
    }

    // Primal value at u minus the dual value at z (through K^T z).
    #[allow(clippy::too_many_arguments)]
    fn gap(
        &self,
        u: &[f64],
        f: &[f64],
        ktz: &[f64],
        dt: f64,
        constraint: &ConstraintSpec,
        n: usize,
        classes: usize,
        ku: &mut [f64],
        scratch: &mut [f64],
    ) -> f64 {
        let m = self.op.m();
        self.apply_all(u, ku, n, m, classes);
        let primal = half_sq_dist(u, f) / dt + norm1(ku);

        self.induced_primal(f, ktz, dt, constraint, n, classes, scratch);
        let dual = half_sq_dist(scratch, f) / dt + dot(ktz, scratch);
        (primal - dual).max(0.0)
    }
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

fn state_from(data: Vec<f64>, n: usize, classes: usize) -> MultiClassState {
    let mut s = MultiClassState::zeros(n, classes);
    s.as_mut_slice().copy_from_slice(&data);
    s
}

/// Anchor `U_k + dt * R_l * qs_l` of the multi-class step.
pub fn anchor(u_k: &MultiClassState, ratios: &[f64], q_shifted: &MultiClassState, dt: f64) -> MultiClassState {
    let mut a = u_k.clone();
    for (l, &r) in ratios.iter().enumerate() {
        let q = q_shifted.column(l);
        a.column_mut(l).iter_mut().zip(q).for_each(|(v, &qi)| *v += dt * r * qi);
    }
    a
}

/// Value of the per-step functional (without the constraint indicator).
pub fn step_objective(
    op: &GradientOperator<'_>,
    u: &MultiClassState,
    u_k: &MultiClassState,
    ratios: &[f64],
    q_shifted: &MultiClassState,
    dt: f64,
) -> f64 {
    let mut value = half_sq_dist(u.as_slice(), u_k.as_slice()) / dt;
    let mut ku = vec![0.0; op.m()];
    for l in 0..u.classes() {
        value -= ratios[l] * dot(q_shifted.column(l), u.column(l));
        op.apply_into(u.column(l), &mut ku);
        value += norm1(&ku);
    }
    value
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// `argmin_u 1/(2 dt) ||u - u_k||^2 - R_k <qs, u> + J(u)`.
pub fn prox_step_binary(
    op: &GradientOperator<'_>,
    u_k: &[f64],
    r_k: f64,
    q_shifted: &[f64],
    dt: f64,
    cfg: &InnerConfig,
) -> Result<Vec<f64>> {
    check_dt(dt)?;
    cfg.validate()?;
    for len in [u_k.len(), q_shifted.len()] {
        if len != op.n() {
            return Err(Error::DimensionMismatch {
                expected: op.n(),
                got: len,
            });
        }
    }
    let a: Vec<f64> = u_k.iter().zip(q_shifted).map(|(u, q)| u + dt * r_k * q).collect();
    let a = MultiClassState::from_columns(&[a])?;
    let sol = PrimalDualSolver::new(*op).solve(&a, None, dt, &ConstraintSpec::None, cfg);
    if !sol.converged {
        return Err(Error::NoConvergence {
            iterations: sol.iterations,
            gap: sol.gap,
        });
    }
    Ok(sol.u.column(0).to_vec())
}

/// Global minimizer of the coupled multi-class step functional.
pub fn prox_step_multiclass(
    op: &GradientOperator<'_>,
    u_k: &MultiClassState,
    ratios: &[f64],
    q_shifted: &MultiClassState,
    dt: f64,
    constraint: &ConstraintSpec,
    cfg: &InnerConfig,
) -> Result<InnerSolution> {
    check_dt(dt)?;
    cfg.validate()?;
    if u_k.n() != op.n() || q_shifted.n() != op.n() {
        return Err(Error::DimensionMismatch {
            expected: op.n(),
            got: if u_k.n() != op.n() { u_k.n() } else { q_shifted.n() },
        });
    }
    if ratios.len() != u_k.classes() || q_shifted.classes() != u_k.classes() {
        return Err(Error::DimensionMismatch {
            expected: u_k.classes(),
            got: ratios.len(),
        });
    }
    let a = anchor(u_k, ratios, q_shifted, dt);
    let sol = PrimalDualSolver::new(*op).solve(&a, None, dt, constraint, cfg);
    if !sol.converged {
        return Err(Error::NoConvergence {
            iterations: sol.iterations,
            gap: sol.gap,
        });
    }
    Ok(sol)
}

/// Per-node multiplier of the coupling constraint recovered from the
/// optimality condition of a multi-class step.
#[derive(Debug, Clone)]
pub struct ChiResidual {
    /// `r_l(x) = (A - U)/dt - K^T z` for every class and node.
    pub residual: MultiClassState,
    /// Class mean of `r(x)`.
    pub alpha: Vec<f64>,
    /// Largest class-variance of `r(x)` over nodes constrained by sum-zero
    /// (all nodes when there is no constraint).
    pub max_class_variance: f64,
}

/// Recovers the constraint subgradient `r` from a solved step and reports
/// how far it is from being constant across classes.
pub fn chi_subgradient_residual(
    op: &GradientOperator<'_>,
    u_k: &MultiClassState,
    solution: &InnerSolution,
    ratios: &[f64],
    q_shifted: &MultiClassState,
    dt: f64,
    constraint: &ConstraintSpec,
) -> ChiResidual {
    let (n, classes, m) = (u_k.n(), u_k.classes(), op.m());
    let a = anchor(u_k, ratios, q_shifted, dt);
    let mut residual = MultiClassState::zeros(n, classes);
    let mut ktz = vec![0.0; n];
    for l in 0..classes {
        op.adjoint_into(&solution.z[l * m..(l + 1) * m], &mut ktz);
        let (al, ul) = (a.column(l), solution.u.column(l));
        for (x, r) in residual.column_mut(l).iter_mut().enumerate() {
            *r = (al[x] - ul[x]) / dt - ktz[x];
        }
    }
    let alpha: Vec<f64> = (0..n)
        .map(|x| (0..classes).map(|l| residual.get(x, l)).sum::<f64>() / classes as f64)
        .collect();
    let prior = constraint.prior();
    let max_class_variance = (0..n)
        .filter(|&x| prior.is_none_or(|p| p.class_of(x).is_none()))
        .map(|x| {
            let spread = match constraint {
                ConstraintSpec::None => (0..classes).map(|l| residual.get(x, l).powi(2)).sum::<f64>(),
                _ => (0..classes)
                    .map(|l| (residual.get(x, l) - alpha[x]).powi(2))
                    .sum::<f64>(),
            };
            spread / classes as f64
        })
        .fold(0.0, f64::max);
    ChiResidual {
        residual,
        alpha,
        max_class_variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;

    fn unit_edge() -> WeightedGraph {
        WeightedGraph::from_edges(2, [(0, 1, 1.0)]).unwrap()
    }

    fn tight() -> InnerConfig {
        InnerConfig {
            max_iter: 200_000,
            gap_tol: 1e-13,
            rel_tol: 1e-15,
            ..InnerConfig::default()
        }
    }

    #[test]
    fn sum_zero_projection() {
        let u = MultiClassState::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let p = project_coupling(&u, &ConstraintSpec::SumZero);
        assert_eq!(p.row(0), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn transductive_clamp() {
        let prior = LabelPrior::new(1, 3, [(0, 0)]);
        // a single node cannot label all three classes, so build a larger prior
        assert!(prior.is_err());
        let prior = LabelPrior::new(3, 3, [(0, 0), (1, 1), (2, 2)]).unwrap();
        let c = ConstraintSpec::transductive(prior, 0.1).unwrap();
        let u = MultiClassState::from_rows(&[vec![0.05, 0.2, -0.3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        let p = project_coupling(&u, &c);
        assert_eq!(p.row(0), vec![0.1, -0.1, -0.3]);
        assert_eq!(c.violation(&p), 0.0);
        assert!(c.violation(&u) > 0.0);
    }

    #[test]
    fn epsilon_must_be_positive() {
        let prior = LabelPrior::new(2, 1, [(0, 0)]).unwrap();
        assert!(ConstraintSpec::transductive(prior, 0.0).is_err());
    }

    #[test]
    fn vanishing_step_returns_input() {
        let g = unit_edge();
        let u = prox_step_binary(
            &g.gradient(),
            &[0.3, -0.7],
            0.0,
            &[0.0, 0.0],
            1e-9,
            &InnerConfig::default(),
        )
        .unwrap();
        assert!((u[0] - 0.3).abs() < 1e-6 && (u[1] + 0.7).abs() < 1e-6);
    }

    #[test]
    fn kernel_is_fixed() {
        let g = WeightedGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let d = g.degrees().to_vec();
        let u = prox_step_binary(&g.gradient(), &d, 0.0, &[0.0; 3], 1.0, &InnerConfig::default()).unwrap();
        assert_eq!(u, d);
    }

    #[test]
    fn unit_edge_prox_closed_form() {
        // prox of dt*|u0 - u1| on two nodes: move both ends towards each
        // other by dt unless they meet.
        let g = unit_edge();
        let dt = 0.25;
        let u = prox_step_binary(&g.gradient(), &[1.0, -1.0], 0.0, &[0.0, 0.0], dt, &tight()).unwrap();
        assert!((u[0] - 0.75).abs() < 1e-6, "{u:?}");
        assert!((u[1] + 0.75).abs() < 1e-6, "{u:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = unit_edge();
        let cfg = InnerConfig::default();
        assert!(prox_step_binary(&g.gradient(), &[1.0, -1.0], 0.0, &[0.0, 0.0], 0.0, &cfg).is_err());
        assert!(prox_step_binary(&g.gradient(), &[1.0], 0.0, &[0.0, 0.0], 1.0, &cfg).is_err());
        let bad = InnerConfig { step_ratio: 1.5, ..cfg };
        assert!(prox_step_binary(&g.gradient(), &[1.0, -1.0], 0.0, &[0.0, 0.0], 1.0, &bad).is_err());
    }

    #[test]
    fn unconstrained_residual_vanishes() {
        let g = WeightedGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 0.5), (0, 2, 2.0)]).unwrap();
        let u_k = MultiClassState::from_columns(&[vec![0.5, -0.2, 0.1], vec![-0.3, 0.9, 0.0]]).unwrap();
        let q = MultiClassState::zeros(3, 2);
        // fixed steps keep the dual itself accurate, not only the gap
        let cfg = InnerConfig {
            accelerated: false,
            ..tight()
        };
        let sol = PrimalDualSolver::new(g.gradient()).solve(&u_k, None, 0.5, &ConstraintSpec::None, &cfg);
        let res = chi_subgradient_residual(&g.gradient(), &u_k, &sol, &[0.0, 0.0], &q, 0.5, &ConstraintSpec::None);
        assert!(res.max_class_variance < 1e-9, "{}", res.max_class_variance);
        assert!(
            res.alpha.iter().all(|a| a.abs() < 1e-6),
            "{:?} {} {}",
            res.alpha,
            sol.iterations,
            sol.gap
        );
    }
}
