use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use graph1l::graph::{read_edge_list, read_features, write_edge_list};
use graph1l::harness::{read_labels, rescore, run_experiment, Summary};
use graph1l::{
    build_knn_gaussian, run_binary, Bandwidth, Denominator, DiffusionConfig, Error, FlowConfig, InnerConfig,
    LabelBudget, Method, TrialPlan, WeightedGraph,
};

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "graph1l",
    version,
    about = "Graph 1-Laplacian semi-supervised classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a k-NN Gaussian graph from a feature CSV and write it as an edge list
    BuildGraph {
        /// Feature matrix, one row per node, no header
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        knn: KnnArgs,
        /// Output edge list (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run repeated random-split trials of one method and score them
    Run(RunArgs),
    /// Re-score persisted trial predictions against the ground truth
    Eval {
        /// Directory written by `run --out`
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Binary partition of a graph by the 1-Laplacian flow
    Partition {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
        /// Output JSON (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct KnnArgs {
    /// Number of nearest neighbors
    #[arg(long = "knn", default_value_t = 10)]
    k: usize,
    /// Gaussian bandwidth: `self` for self-tuning or a fixed positive value
    #[arg(long, default_value = "self")]
    sigma: Bandwidth,
}

#[derive(Args)]
struct FlowArgs {
    /// Time step of the flow
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Clamp margin on labeled nodes
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Denominator: l2, l1 or l1med
    #[arg(long = "h", default_value = "l2")]
    denominator: Denominator,
    #[arg(long, default_value_t = 1e-6)]
    outer_tol: f64,
    #[arg(long, default_value_t = 500)]
    max_outer: usize,
    /// Iteration cap of the inner primal-dual solver
    #[arg(long, default_value_t = 2000)]
    inner_max_iter: usize,
    /// Duality-gap tolerance of the inner solver
    #[arg(long, default_value_t = 1e-7)]
    gap_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FlowArgs {
    fn config(&self) -> FlowConfig {
        FlowConfig {
            dt: self.dt,
            max_outer: self.max_outer,
            outer_tol: self.outer_tol,
            denominator: self.denominator,
            epsilon: self.eps,
            inner: InnerConfig {
                max_iter: self.inner_max_iter,
                gap_tol: self.gap_tol,
                ..InnerConfig::default()
            },
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Edge-list graph
    #[arg(long, conflicts_with = "features", required_unless_present = "features")]
    graph: Option<PathBuf>,
    /// Feature CSV; a k-NN graph is built from it
    #[arg(long)]
    features: Option<PathBuf>,
    #[command(flatten)]
    knn: KnnArgs,
    /// Ground-truth classes, one per line
    #[arg(long)]
    truth: PathBuf,
    /// graph1l, lgc or lp
    #[arg(long, default_value = "graph1l")]
    method: Method,
    #[arg(long, conflicts_with = "label_fraction", required_unless_present = "label_fraction")]
    labels_per_class: Option<usize>,
    #[arg(long)]
    label_fraction: Option<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[command(flatten)]
    flow: FlowArgs,
    /// LGC diffusion weight
    #[arg(long, default_value_t = 0.99)]
    alpha: f64,
    /// Output directory for per-trial results and summary.json
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let solver = err.downcast_ref::<Error>().is_some_and(|e| {
                matches!(
                    e,
                    Error::NoConvergence { .. } | Error::ConstantLimit | Error::InfeasibleEpsilon { .. }
                )
            });
            ExitCode::from(if solver { EXIT_SOLVER } else { EXIT_INPUT })
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::BuildGraph { features, knn, out } => {
            let graph = knn_graph(&features, &knn)?;
            match out {
                Some(path) => write_edge_list(&graph, io::BufWriter::new(fs::File::create(&path)?))?,
                None => write_edge_list(&graph, io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => run(args),
        Command::Eval { dir, truth } => {
            let truth = read_labels(&truth)?;
            let summary = rescore(&dir, &truth)?;
            print_summary(&summary)?;
            Ok(exit_for(&summary))
        }
        Command::Partition { graph, flow, out } => {
            let graph = read_edge_list(&graph, None)?;
            let res = run_binary(&graph, None, &flow.config())?;
            let doc = serde_json::json!({
                "u": res.u,
                "partition": res.partition,
                "trace": res.trace,
            });
            emit(out.as_deref(), &serde_json::to_vec_pretty(&doc)?)?;
            Ok(if res.trace.converged() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_SOLVER)
            })
        }
    }
}

fn knn_graph(features: &Path, knn: &KnnArgs) -> anyhow::Result<WeightedGraph> {
    let rows = read_features(features)?;
    build_knn_gaussian(&rows, knn.k, knn.sigma)
        .with_context(|| format!("building k-NN graph from {}", features.display()))
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let graph = match (&args.graph, &args.features) {
        (Some(path), _) => read_edge_list(path, None)?,
        (None, Some(path)) => knn_graph(path, &args.knn)?,
        (None, None) => anyhow::bail!("either --graph or --features is required"),
    };
    let truth = read_labels(&args.truth)?;
    let budget = match (args.labels_per_class, args.label_fraction) {
        (Some(k), _) => LabelBudget::PerClass(k),
        (None, Some(f)) => LabelBudget::Fraction(f),
        (None, None) => anyhow::bail!("either --labels-per-class or --label-fraction is required"),
    };
    let plan = TrialPlan {
        budget,
        trials: args.trials,
        base_seed: args.flow.seed,
        method: args.method,
    };
    let diffusion = DiffusionConfig {
        alpha: args.alpha,
        ..DiffusionConfig::default()
    };
    let outcome = run_experiment(
        &graph,
        &truth,
        &plan,
        &args.flow.config(),
        &diffusion,
        args.out.as_deref(),
    )?;
    print_summary(&outcome.summary)?;
    Ok(exit_for(&outcome.summary))
}

fn exit_for(summary: &Summary) -> ExitCode {
    if summary.all_converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SOLVER)
    }
}

fn print_summary(summary: &Summary) -> anyhow::Result<()> {
    let doc = serde_json::json!({
        "method": summary.method,
        "trials": summary.trials,
        "mean": summary.mean,
        "std": summary.std,
        "failed": summary.failed,
        "nonconverged": summary.nonconverged,
    });
    emit(None, &serde_json::to_vec_pretty(&doc)?)
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
