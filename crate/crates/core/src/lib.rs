//! Semi-supervised classification on weighted graphs by minimizing
//! Rayleigh quotients of the normalized graph 1-Laplacian energy.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | validated weighted graphs, k-NN construction, the gradient operator `K = W D^{-1}` |
//! | [`energy`] | `J`, `D_p`, the denominators `H` and their subgradients, ratios |
//! | [`prox`] | primal-dual solver for the per-step subproblems, coupling projections |
//! | [`flow`] | binary, multi-class and transductive flows, label decoding |
//! | [`baseline`] | LGC diffusion and harmonic label propagation |
//! | [`harness`] | label splits, repeated trials and metrics |
//!
//! ```
//! use graph1l::{run_transductive, FlowConfig, LabelPrior, WeightedGraph};
//!
//! // two triangles joined by a weak edge, one seed in each
//! let g = WeightedGraph::from_edges(6, [
//!     (0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0),
//!     (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0),
//!     (2, 3, 0.01),
//! ]).unwrap();
//! let prior = LabelPrior::new(6, 2, [(0, 0), (5, 1)]).unwrap();
//! let res = run_transductive(&g, &prior, &FlowConfig::default()).unwrap();
//! assert_eq!(res.labeling.hard, vec![0, 0, 0, 1, 1, 1]);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod energy;
pub mod error;
pub mod flow;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod prox;
pub mod state;

pub use baseline::{run_label_propagation, run_lgc, DiffusionConfig};
pub use energy::{energy_dp, energy_j, ratio, shifted_subgradient, verify_subgradient, Denominator, RatioValue};
pub use error::{Error, Result};
pub use flow::{
    decode_labels, init_transductive, run_binary, run_multiclass, run_transductive, run_transductive_from, FlowConfig,
    FlowStatus, FlowTrace, Labeling,
};
pub use graph::{build_knn_gaussian, Bandwidth, Edge, GradientOperator, WeightedGraph};
pub use harness::{evaluate, run_experiment, split_labels, LabelBudget, Method, MetricsReport, TrialPlan};
pub use prox::{
    chi_subgradient_residual, project_coupling, prox_step_binary, prox_step_multiclass, ConstraintSpec, InnerConfig,
};
pub use state::{LabelPrior, MultiClassState};
