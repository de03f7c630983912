//! Outer iterations: the binary partition flow, the coupled multi-class
//! flow and its label-clamped transductive variant.
//!
//! Each step evaluates the ratios `R_l = J(u_l)/H(u_l)` and subgradients
//! `q_l` at the current iterate, takes one implicit proximal step on `J`
//! (see [`crate::prox`]) and rescales the result to unit joint norm.
//! Subgradients are shifted orthogonally to `d` so that iterates starting
//! orthogonal to `d` stay there.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::energy::{ratio, shifted_subgradient, Denominator, VANISH_TOL};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::{dot, norm2};
use crate::prox::{anchor, ConstraintSpec, InnerConfig, PrimalDualSolver};
use crate::state::{LabelPrior, MultiClassState};

/// Tolerance on the unit-norm and orthogonality preconditions of
/// user-supplied initial states.
const INIT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Time step `dt`.
    pub dt: f64,
    pub max_outer: usize,
    /// Stop once `||u_{k+1} - u_k||_2 <= outer_tol`.
    pub outer_tol: f64,
    pub denominator: Denominator,
    /// Clamp margin on labeled nodes (transductive runs only).
    pub epsilon: f64,
    pub inner: InnerConfig,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            max_outer: 500,
            outer_tol: 1e-6,
            denominator: Denominator::L2,
            epsilon: 1e-4,
            inner: InnerConfig::default(),
            seed: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidConfig("max_outer must be >= 1".into()));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidConfig("outer_tol must be positive".into()));
        }
        self.inner.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    MaxIterations,
}

/// Per-iteration diagnostics.
///
/// `ratios`, `denominators` and `d_orthogonality` hold one entry per
/// iterate `u_0 .. u_K` (one value per class); the other arrays hold one
/// entry per step `k -> k+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub ratios: Vec<Vec<f64>>,
    pub denominators: Vec<Vec<f64>>,
    /// `|<u_l, d>| / (||u_l|| ||d||)`
    pub d_orthogonality: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Violation of the coupling constraint by the unnormalized step
    /// output `U_{k+1/2}`.
    pub constraint_violation: Vec<f64>,
    /// `||U_{k+1/2}||_2`, whose running maximum bounds the step growth.
    pub half_norms: Vec<f64>,
    pub inner_iters: Vec<usize>,
    pub inner_gaps: Vec<f64>,
    /// Steps whose inner solve ended above `10 * gap_tol`.
    pub inner_failures: usize,
    pub status: FlowStatus,
}

impl FlowTrace {
    fn new() -> Self {
        Self {
            ratios: Vec::new(),
            denominators: Vec::new(),
            d_orthogonality: Vec::new(),
            residuals: Vec::new(),
            constraint_violation: Vec::new(),
            half_norms: Vec::new(),
            inner_iters: Vec::new(),
            inner_gaps: Vec::new(),
            inner_failures: 0,
            status: FlowStatus::MaxIterations,
        }
    }

    pub fn steps(&self) -> usize {
        self.residuals.len()
    }

    /// Largest `||U_{k+1/2}||` seen, the empirical bound used in the
    /// weighted-decrease inequality.
    pub fn kappa(&self) -> f64 {
        self.half_norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn converged(&self) -> bool {
        self.status == FlowStatus::Converged && self.inner_failures == 0
    }
}

/// Output of [`run_binary`].
#[derive(Debug, Clone)]
pub struct BinaryResult {
    pub u: Vec<f64>,
    /// `u(x) > 0`
    pub partition: Vec<bool>,
    pub trace: FlowTrace,
}

#[derive(Debug, Clone)]
pub struct MultiClassResult {
    pub u: MultiClassState,
    pub trace: FlowTrace,
}

#[derive(Debug, Clone)]
pub struct TransductiveResult {
    pub u: MultiClassState,
    pub labeling: Labeling,
    pub trace: FlowTrace,
}

/// Hard and soft class assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub hard: Vec<usize>,
    /// `n x L`, nonnegative rows summing to one.
    pub soft: Vec<Vec<f64>>,
}

/// Seeded standard normal vector, orthogonal to `d`, unit norm.
pub fn random_orthogonal_unit(d: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..d.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    remove_component(&mut u, d);
    let nu = norm2(&u);
    u.iter_mut().for_each(|v| *v /= nu);
    u
}

fn remove_component(u: &mut [f64], d: &[f64]) {
    let coef = dot(u, d) / dot(d, d);
    u.iter_mut().zip(d).for_each(|(v, &di)| *v -= coef * di);
}

fn relative_orthogonality(u: &[f64], d: &[f64]) -> f64 {
    let nu = norm2(u);
    if nu == 0.0 {
        0.0
    } else {
        dot(u, d).abs() / (nu * norm2(d))
    }
}

/// Binary partition flow. `u0 = None` draws a seeded random start.
///
/// Returns the limit `u*` and its sign partition; fails with
/// [`Error::ConstantLimit`] if `u*` does not change sign.
pub fn run_binary(graph: &WeightedGraph, u0: Option<&[f64]>, cfg: &FlowConfig) -> Result<BinaryResult> {
    cfg.validate()?;
    let d = graph.degrees();
    let start = match u0 {
        Some(u) => {
            if u.len() != graph.n() {
                return Err(Error::DimensionMismatch {
                    expected: graph.n(),
                    got: u.len(),
                });
            }
            if (norm2(u) - 1.0).abs() > INIT_TOL || dot(u, d).abs() > INIT_TOL * norm2(d) {
                return Err(Error::InvalidConfig(
                    "u0 must have unit norm and be orthogonal to d".into(),
                ));
            }
            u.to_vec()
        }
        None => random_orthogonal_unit(d, cfg.seed),
    };
    let state = MultiClassState::from_columns(&[start])?;
    let (u, trace) = outer_loop(graph, state, &ConstraintSpec::None, cfg)?;
    let u = u.column(0).to_vec();
    let has_pos = u.iter().any(|&v| v > 1e-10);
    let has_neg = u.iter().any(|&v| v < -1e-10);
    if !(has_pos && has_neg) {
        return Err(Error::ConstantLimit);
    }
    let partition = u.iter().map(|&v| v > 0.0).collect();
    Ok(BinaryResult { u, partition, trace })
}

/// Seeded start for the multi-class flow: normal entries, centered per
/// node, each class made orthogonal to `d`, unit joint norm.
pub fn init_multiclass(graph: &WeightedGraph, classes: usize, seed: u64) -> MultiClassState {
    let n = graph.n();
    let d = graph.degrees();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = MultiClassState::zeros(n, classes);
    for v in u.as_mut_slice() {
        *v = StandardNormal.sample(&mut rng);
    }
    ConstraintSpec::SumZero.project_in_place(&mut u);
    // the d-components of the columns sum to zero, so removing them keeps
    // every node centered
    for l in 0..classes {
        remove_component(u.column_mut(l), d);
    }
    let nu = u.norm();
    u.scale(1.0 / nu);
    u
}

/// Coupled multi-class flow under the sum-zero constraint.
pub fn run_multiclass(
    graph: &WeightedGraph,
    classes: usize,
    u0: Option<MultiClassState>,
    cfg: &FlowConfig,
) -> Result<MultiClassResult> {
    cfg.validate()?;
    if classes == 0 {
        return Err(Error::InvalidConfig("class count must be positive".into()));
    }
    let start = match u0 {
        Some(u) => {
            if u.n() != graph.n() || u.classes() != classes {
                return Err(Error::DimensionMismatch {
                    expected: graph.n() * classes,
                    got: u.n() * u.classes(),
                });
            }
            let d = graph.degrees();
            let orthogonal = u.columns().all(|c| dot(c, d).abs() <= INIT_TOL * norm2(d));
            if (u.norm() - 1.0).abs() > INIT_TOL || ConstraintSpec::SumZero.violation(&u) > INIT_TOL || !orthogonal {
                return Err(Error::InvalidConfig(
                    "U0 must be sum-zero per node, orthogonal to d per class and of unit joint norm".into(),
                ));
            }
            u
        }
        None => init_multiclass(graph, classes, cfg.seed),
    };
    let (u, trace) = outer_loop(graph, start, &ConstraintSpec::SumZero, cfg)?;
    Ok(MultiClassResult { u, trace })
}

/// Feasible start for the transductive flow.
///
/// A labeled node of class `l` gets `(L-1) a` on class `l` and `-a`
/// elsewhere; unlabeled nodes get small centered noise. After joint
/// normalization the labeled margin `a/||U||` must be at least
/// `2 epsilon`.
pub fn init_transductive(
    graph: &WeightedGraph,
    prior: &LabelPrior,
    epsilon: f64,
    seed: u64,
) -> Result<MultiClassState> {
    if prior.n() != graph.n() {
        return Err(Error::DimensionMismatch {
            expected: graph.n(),
            got: prior.n(),
        });
    }
    let classes = prior.classes();
    let amplitude = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = MultiClassState::zeros(graph.n(), classes);
    for x in 0..graph.n() {
        match prior.class_of(x) {
            Some(own) => {
                for l in 0..classes {
                    let v = if l == own {
                        (classes as f64 - 1.0) * amplitude
                    } else {
                        -amplitude
                    };
                    u.set(x, l, v);
                }
            }
            None => {
                for l in 0..classes {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    u.set(x, l, 0.01 * amplitude * noise);
                }
            }
        }
    }
    ConstraintSpec::SumZero.project_in_place(&mut u);
    // labeled rows already sum to zero; recentering them is a no-op up to
    // rounding, so restore the exact values
    for (x, own) in prior.assignments() {
        for l in 0..classes {
            let v = if l == own {
                (classes as f64 - 1.0) * amplitude
            } else {
                -amplitude
            };
            u.set(x, l, v);
        }
    }
    let nu = u.norm();
    let margin = if classes >= 2 { amplitude / nu } else { 0.0 };
    if !(epsilon > 0.0) || epsilon > 0.5 * margin {
        return Err(Error::InfeasibleEpsilon { epsilon, margin });
    }
    u.scale(1.0 / nu);
    Ok(u)
}

/// Label-clamped flow: propagates the prior through the graph and decodes
/// the limit into hard and soft labels.
pub fn run_transductive(graph: &WeightedGraph, prior: &LabelPrior, cfg: &FlowConfig) -> Result<TransductiveResult> {
    cfg.validate()?;
    let start = init_transductive(graph, prior, cfg.epsilon, cfg.seed)?;
    run_transductive_from(graph, prior, start, cfg)
}

/// Transductive flow from a caller-supplied start, which must be feasible
/// for the clamped constraint and of unit joint norm.
pub fn run_transductive_from(
    graph: &WeightedGraph,
    prior: &LabelPrior,
    u0: MultiClassState,
    cfg: &FlowConfig,
) -> Result<TransductiveResult> {
    cfg.validate()?;
    if u0.n() != graph.n() || u0.classes() != prior.classes() || prior.n() != graph.n() {
        return Err(Error::DimensionMismatch {
            expected: graph.n() * prior.classes(),
            got: u0.n() * u0.classes(),
        });
    }
    let constraint = ConstraintSpec::transductive(prior.clone(), cfg.epsilon)?;
    if (u0.norm() - 1.0).abs() > INIT_TOL || constraint.violation(&u0) > INIT_TOL {
        return Err(Error::InvalidConfig(
            "U0 must satisfy the clamped coupling constraint and have unit joint norm".into(),
        ));
    }
    let (u, trace) = outer_loop(graph, u0, &constraint, cfg)?;
    let labeling = decode_labels(&u, Some(prior));
    Ok(TransductiveResult { u, labeling, trace })
}

fn outer_loop(
    graph: &WeightedGraph,
    mut u: MultiClassState,
    constraint: &ConstraintSpec,
    cfg: &FlowConfig,
) -> Result<(MultiClassState, FlowTrace)> {
    let solver = PrimalDualSolver::new(graph.gradient());
    let op = solver.operator();
    let d = graph.degrees();
    let classes = u.classes();
    let mut trace = FlowTrace::new();
    let mut warm: Option<Vec<f64>> = None;

    let mut current = evaluate(&op, &u, d, cfg.denominator)?;
    for _ in 0..cfg.max_outer {
        trace.ratios.push(current.ratios.clone());
        trace.denominators.push(current.denominators.clone());
        trace.d_orthogonality.push(current.orthogonality.clone());

        let a = anchor(&u, &current.ratios, &current.shifted, cfg.dt);
        let sol = solver.solve(&a, warm.as_deref(), cfg.dt, constraint, &cfg.inner);
        trace.inner_iters.push(sol.iterations);
        trace.inner_gaps.push(sol.gap);
        if !sol.converged {
            trace.inner_failures += 1;
        }
        trace.constraint_violation.push(constraint.violation(&sol.u));

        let half_norm = sol.u.norm();
        trace.half_norms.push(half_norm);
        if !(half_norm > 0.0) {
            return Err(Error::InvalidConfig("flow step collapsed to zero".into()));
        }
        let mut next = sol.u;
        next.scale(1.0 / half_norm);
        if let Some(prior) = constraint.prior() {
            check_label_signs(&next, prior, cfg.epsilon)?;
        }
        let residual = next.distance(&u);
        trace.residuals.push(residual);
        warm = Some(sol.z);
        u = next;
        current = evaluate(&op, &u, d, cfg.denominator)?;
        if residual <= cfg.outer_tol {
            trace.status = FlowStatus::Converged;
            break;
        }
    }
    trace.ratios.push(current.ratios);
    trace.denominators.push(current.denominators);
    trace.d_orthogonality.push(current.orthogonality);
    debug_assert_eq!(trace.ratios.len(), trace.steps() + 1);
    debug_assert!(classes == trace.ratios[0].len());
    Ok((u, trace))
}

fn check_label_signs(u: &MultiClassState, prior: &LabelPrior, epsilon: f64) -> Result<()> {
    for (x, own) in prior.assignments() {
        for l in 0..u.classes() {
            let v = u.get(x, l);
            let ok = if l == own { v > 0.0 } else { v < 0.0 };
            if !ok {
                let margin = (0..u.classes())
                    .map(|c| u.get(x, c).abs())
                    .fold(f64::INFINITY, f64::min);
                return Err(Error::InfeasibleEpsilon { epsilon, margin });
            }
        }
    }
    Ok(())
}

struct Evaluation {
    ratios: Vec<f64>,
    denominators: Vec<f64>,
    orthogonality: Vec<f64>,
    shifted: MultiClassState,
}

fn evaluate(
    op: &crate::graph::GradientOperator<'_>,
    u: &MultiClassState,
    d: &[f64],
    kind: Denominator,
) -> Result<Evaluation> {
    let classes = u.classes();
    let mut shifted = MultiClassState::zeros(u.n(), classes);
    let mut ratios = Vec::with_capacity(classes);
    let mut denominators = Vec::with_capacity(classes);
    let mut orthogonality = Vec::with_capacity(classes);
    for l in 0..classes {
        let col = u.column(l);
        let r = ratio(op, col, kind, VANISH_TOL)?;
        ratios.push(r.ratio);
        denominators.push(r.denominator);
        orthogonality.push(relative_orthogonality(col, d));
        if !r.vanished {
            let q = shifted_subgradient(&kind.subgradient(col), d);
            shifted.column_mut(l).copy_from_slice(&q);
        }
    }
    Ok(Evaluation {
        ratios,
        denominators,
        orthogonality,
        shifted,
    })
}

/// Hard labels by argmax (ties to the lowest class) and soft labels from
/// the nonnegative entries of each row.
///
/// Labeled nodes of `prior` keep their prior class.
pub fn decode_labels(u: &MultiClassState, prior: Option<&LabelPrior>) -> Labeling {
    let classes = u.classes();
    let mut hard = Vec::with_capacity(u.n());
    let mut soft = Vec::with_capacity(u.n());
    for x in 0..u.n() {
        let row = u.row(x);
        let mut best = 0;
        for l in 1..classes {
            if row[l] > row[best] {
                best = l;
            }
        }
        hard.push(prior.and_then(|p| p.class_of(x)).unwrap_or(best));
        soft.push(soft_row(&row, best));
    }
    Labeling { hard, soft }
}

fn soft_row(row: &[f64], best: usize) -> Vec<f64> {
    let classes = row.len();
    if row.iter().all(|&v| v == 0.0) {
        return vec![1.0 / classes as f64; classes];
    }
    let active: Vec<usize> = (0..classes).filter(|&l| row[l] >= 0.0).collect();
    let mut out = vec![0.0; classes];
    if active.is_empty() {
        out[best] = 1.0;
        return out;
    }
    let total: f64 = active.iter().map(|&l| row[l]).sum();
    if total > 0.0 {
        for &l in &active {
            out[l] = row[l] / total;
        }
    } else {
        for &l in &active {
            out[l] = 1.0 / active.len() as f64;
        }
    }
    out
}
