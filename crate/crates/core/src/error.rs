use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {0} has zero degree")]
    IsolatedNode(usize),

    #[error("node index {index} out of range for a graph with {n} nodes")]
    BadIndex { index: usize, n: usize },

    #[error("edge ({i}, {j}) has non-positive weight {w}")]
    NonPositiveWeight { i: usize, j: usize, w: f64 },

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("k-NN graph needs at least 2 points and 1 <= k < n (n = {n}, k = {k})")]
    DegenerateFeatures { n: usize, k: usize },

    #[error("inner solver did not converge after {iterations} iterations (gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("flow limit has entries of a single sign")]
    ConstantLimit,

    #[error("epsilon {epsilon:e} is infeasible: normalized label margin is only {margin:e}")]
    InfeasibleEpsilon { epsilon: f64, margin: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid label prior: {0}")]
    InvalidPrior(String),

    #[error("class {class} has {available} members but {requested} labels were requested")]
    TooFewSamples {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
