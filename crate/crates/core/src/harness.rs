//! Experiment protocol: stratified random label splits, repeated trials,
//! error rate and F1 scores over the unlabeled nodes.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{run_label_propagation, run_lgc, DiffusionConfig};
use crate::error::{Error, Result};
use crate::flow::{run_transductive, FlowConfig, FlowTrace, Labeling};
use crate::graph::WeightedGraph;
use crate::state::LabelPrior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Graph1l,
    Lgc,
    Lp,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "graph1l" => Ok(Method::Graph1l),
            "lgc" => Ok(Method::Lgc),
            "lp" => Ok(Method::Lp),
            _ => Err(format!("unknown method '{s}' (expected graph1l, lgc or lp)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelBudget {
    PerClass(usize),
    /// Fraction of all nodes, in `(0, 1]`.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub budget: LabelBudget,
    pub trials: usize,
    pub base_seed: u64,
    pub method: Method,
}

impl TrialPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("at least one trial is required".into()));
        }
        match self.budget {
            LabelBudget::PerClass(0) => Err(Error::InvalidConfig("labels per class must be >= 1".into())),
            LabelBudget::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(Error::InvalidConfig(format!(
                "label fraction must lie in (0, 1], got {f}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Number of classes in `truth`; every class below the maximum must occur.
pub fn class_count(truth: &[usize]) -> Result<usize> {
    let classes = truth.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; classes];
    truth.iter().for_each(|&c| seen[c] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPrior(format!(
            "class {missing} does not occur in the ground truth"
        )));
    }
    Ok(classes)
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Per-class label counts for a budget.
///
/// A fractional budget is rounded half up on the total, split across
/// classes proportionally to their sizes (largest remainder, ties to the
/// lower class), with at least one label per class.
pub fn allocate_labels(class_sizes: &[usize], budget: LabelBudget) -> Result<Vec<usize>> {
    let counts = match budget {
        LabelBudget::PerClass(k) => vec![k; class_sizes.len()],
        LabelBudget::Fraction(f) => {
            let n: usize = class_sizes.iter().sum();
            let total = round_half_up(f * n as f64).clamp(class_sizes.len(), n);
            let quotas: Vec<f64> = class_sizes
                .iter()
                .map(|&s| total as f64 * s as f64 / n as f64)
                .collect();
            let mut counts: Vec<usize> = quotas.iter().map(|q| (q.floor() as usize).max(1)).collect();
            let mut order: Vec<usize> = (0..class_sizes.len()).collect();
            order.sort_by(|&a, &b| {
                let ra = quotas[a] - quotas[a].floor();
                let rb = quotas[b] - quotas[b].floor();
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            let mut assigned: usize = counts.iter().sum();
            for &c in order.iter().cycle().take(order.len() * 2) {
                if assigned >= total {
                    break;
                }
                if counts[c] < class_sizes[c] {
                    counts[c] += 1;
                    assigned += 1;
                }
            }
            counts
        }
    };
    for (class, (&want, &have)) in counts.iter().zip(class_sizes).enumerate() {
        if want > have {
            return Err(Error::TooFewSamples {
                class,
                available: have,
                requested: want,
            });
        }
    }
    Ok(counts)
}

/// Stratified random labeled set for one trial. Depends only on
/// `(base_seed, trial, truth)`.
pub fn split_labels(truth: &[usize], plan: &TrialPlan, trial: usize) -> Result<LabelPrior> {
    plan.validate()?;
    let classes = class_count(truth)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (x, &c) in truth.iter().enumerate() {
        members[c].push(x);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let counts = allocate_labels(&sizes, plan.budget)?;

    let mut rng = ChaCha8Rng::seed_from_u64(plan.base_seed);
    rng.set_stream(trial as u64);
    let mut assignments = Vec::new();
    for (class, (pool, &count)) in members.iter_mut().zip(&counts).enumerate() {
        let (chosen, _) = pool.partial_shuffle(&mut rng, count);
        assignments.extend(chosen.iter().map(|&x| (x, class)));
    }
    LabelPrior::new(truth.len(), classes, assignments)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub error_rate: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// Number of scored (unlabeled) nodes.
    pub scored: usize,
}

/// Scores predictions on the nodes outside `labeled`.
///
/// Per-class F1 is `2 TP / (2 TP + FP + FN)`, taken as 1 for a class that
/// neither occurs nor is predicted among scored nodes.
pub fn evaluate(pred: &[usize], truth: &[usize], labeled: &[bool]) -> Result<TrialMetrics> {
    for len in [pred.len(), labeled.len()] {
        if len != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: len,
            });
        }
    }
    let classes = truth.iter().chain(pred).max().map_or(0, |m| m + 1);
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fal_neg = vec![0usize; classes];
    let mut scored = 0;
    let mut wrong = 0;
    for ((&p, &t), _) in pred.iter().zip(truth).zip(labeled).filter(|(_, &l)| !l) {
        scored += 1;
        if p == t {
            tp[t] += 1;
        } else {
            wrong += 1;
            fp[p] += 1;
            fal_neg[t] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fal_neg: usize| {
        let denom = 2 * tp + fp + fal_neg;
        if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let macro_f1 = if classes == 0 {
        1.0
    } else {
        (0..classes).map(|c| f1(tp[c], fp[c], fal_neg[c])).sum::<f64>() / classes as f64
    };
    let correct: usize = tp.iter().sum();
    Ok(TrialMetrics {
        error_rate: if scored == 0 { 0.0 } else { wrong as f64 / scored as f64 },
        macro_f1,
        micro_f1: f1(correct, wrong, wrong),
        scored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub error_rate: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_trial: Vec<TrialMetrics>,
    pub mean: MetricTriple,
    /// Sample standard deviation (0 for a single trial).
    pub std: MetricTriple,
}

impl MetricsReport {
    pub fn aggregate(per_trial: Vec<TrialMetrics>) -> Self {
        let pick = |f: fn(&TrialMetrics) -> f64| -> (f64, f64) {
            let k = per_trial.len();
            if k == 0 {
                return (f64::NAN, f64::NAN);
            }
            let mean = per_trial.iter().map(f).sum::<f64>() / k as f64;
            let var = if k > 1 {
                per_trial.iter().map(|t| (f(t) - mean).powi(2)).sum::<f64>() / (k - 1) as f64
            } else {
                0.0
            };
            (mean, var.sqrt())
        };
        let (e_m, e_s) = pick(|t| t.error_rate);
        let (ma_m, ma_s) = pick(|t| t.macro_f1);
        let (mi_m, mi_s) = pick(|t| t.micro_f1);
        Self {
            per_trial,
            mean: MetricTriple {
                error_rate: e_m,
                macro_f1: ma_m,
                micro_f1: mi_m,
            },
            std: MetricTriple {
                error_rate: e_s,
                macro_f1: ma_s,
                micro_f1: mi_s,
            },
        }
    }
}

/// Everything persisted for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    /// `(node, class)` pairs of the labeled set.
    pub labeled: Vec<(usize, usize)>,
    pub hard: Vec<usize>,
    pub soft: Vec<Vec<f64>>,
    pub trace: Option<FlowTrace>,
    pub metrics: TrialMetrics,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub trials: usize,
    pub budget: LabelBudget,
    pub base_seed: u64,
    pub mean: MetricTriple,
    pub std: MetricTriple,
    pub per_trial: Vec<TrialMetrics>,
    pub failed: Vec<FailedTrial>,
    /// Trials whose flow stopped at the iteration limit or had inner
    /// solves above tolerance.
    pub nonconverged: Vec<usize>,
}

impl Summary {
    pub fn all_converged(&self) -> bool {
        self.failed.is_empty() && self.nonconverged.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub records: Vec<TrialRecord>,
}

/// Per-trial seed for the flow initializer.
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    base_seed ^ (trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs one method on one split.
pub fn run_trial(
    graph: &WeightedGraph,
    truth: &[usize],
    plan: &TrialPlan,
    trial: usize,
    flow: &FlowConfig,
    diffusion: &DiffusionConfig,
) -> Result<TrialRecord> {
    let prior = split_labels(truth, plan, trial)?;
    let (labeling, trace, converged): (Labeling, Option<FlowTrace>, bool) = match plan.method {
        Method::Graph1l => {
            let cfg = FlowConfig {
                seed: trial_seed(plan.base_seed, trial),
                ..*flow
            };
            let res = run_transductive(graph, &prior, &cfg)?;
            let converged = res.trace.converged();
            (res.labeling, Some(res.trace), converged)
        }
        Method::Lgc => (run_lgc(graph, &prior, diffusion)?, None, true),
        Method::Lp => (run_label_propagation(graph, &prior, diffusion)?, None, true),
    };
    let metrics = evaluate(&labeling.hard, truth, &prior.labeled_mask())?;
    Ok(TrialRecord {
        trial,
        method: plan.method,
        labeled: prior.assignments().collect(),
        hard: labeling.hard,
        soft: labeling.soft,
        trace,
        metrics,
        converged,
    })
}

/// Runs all trials of `plan` on a shared graph, concurrently, and
/// aggregates in trial order. Writes `trial_NNN.json` files and
/// `summary.json` when `out_dir` is given.
pub fn run_experiment(
    graph: &WeightedGraph,
    truth: &[usize],
    plan: &TrialPlan,
    flow: &FlowConfig,
    diffusion: &DiffusionConfig,
    out_dir: Option<&Path>,
) -> Result<ExperimentOutcome> {
    plan.validate()?;
    if truth.len() != graph.n() {
        return Err(Error::DimensionMismatch {
            expected: graph.n(),
            got: truth.len(),
        });
    }
    class_count(truth)?;
    let results: Vec<Result<TrialRecord>> = (0..plan.trials)
        .into_par_iter()
        .map(|t| run_trial(graph, truth, plan, t, flow, diffusion))
        .collect();

    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (trial, res) in results.into_iter().enumerate() {
        match res {
            Ok(rec) => records.push(rec),
            // bad inputs abort the whole experiment, solver trouble only
            // the trial
            Err(e @ (Error::TooFewSamples { .. } | Error::InvalidPrior(_) | Error::InvalidConfig(_))) => return Err(e),
            Err(e) => failed.push(FailedTrial {
                trial,
                error: e.to_string(),
            }),
        }
    }
    let summary = summarize(plan, &records, failed);

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        for rec in &records {
            fs::write(trial_path(dir, rec.trial), serde_json::to_vec_pretty(rec)?)?;
        }
        fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    }
    Ok(ExperimentOutcome { summary, records })
}

fn summarize(plan: &TrialPlan, records: &[TrialRecord], failed: Vec<FailedTrial>) -> Summary {
    let report = MetricsReport::aggregate(records.iter().map(|r| r.metrics).collect());
    Summary {
        method: plan.method,
        trials: plan.trials,
        budget: plan.budget,
        base_seed: plan.base_seed,
        mean: report.mean,
        std: report.std,
        per_trial: report.per_trial,
        failed,
        nonconverged: records.iter().filter(|r| !r.converged).map(|r| r.trial).collect(),
    }
}

pub fn trial_path(dir: &Path, trial: usize) -> PathBuf {
    dir.join(format!("trial_{trial:03}.json"))
}

/// Re-scores persisted trial files in `dir` against `truth` and rebuilds
/// the summary that `run_experiment` wrote.
pub fn rescore(dir: &Path, truth: &[usize]) -> Result<Summary> {
    let summary_path = dir.join("summary.json");
    let stored: Summary = serde_json::from_slice(&fs::read(&summary_path)?)?;
    let mut records = Vec::new();
    for trial in 0..stored.trials {
        let path = trial_path(dir, trial);
        if !path.exists() {
            continue;
        }
        let mut rec: TrialRecord = serde_json::from_slice(&fs::read(&path)?)?;
        let mut labeled = vec![false; truth.len()];
        for &(x, _) in &rec.labeled {
            if x >= truth.len() {
                return Err(Error::BadIndex {
                    index: x,
                    n: truth.len(),
                });
            }
            labeled[x] = true;
        }
        rec.metrics = evaluate(&rec.hard, truth, &labeled)?;
        records.push(rec);
    }
    let plan = TrialPlan {
        budget: stored.budget,
        trials: stored.trials,
        base_seed: stored.base_seed,
        method: stored.method,
    };
    Ok(summarize(&plan, &records, stored.failed))
}

/// Ground-truth classes, one non-negative integer per line; blank lines
/// and `#` comments are skipped.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(line.parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            message: format!("expected a class index, got '{line}'"),
        })?);
    }
    Ok(out)
}
