use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kces::ErrorKind;
use serde::Serialize;

mod commands;
mod manifest;

#[derive(Debug, Parser)]
#[command(
    name = "kces",
    version,
    about = "Kernel-complexity edge scoring and sanitization"
)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Where to write the run manifest (defaults to `<output>.manifest.json`).
    #[arg(long, global = true)]
    manifest_out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every edge by its kernel-complexity change.
    Score(ScoreArgs),
    /// Remove a ratio of edges chosen by KC rank.
    Prune(PruneArgs),
    /// Perturb a graph with a random or DICE attack.
    Attack(AttackArgs),
    /// Train one-vs-rest networks and report accuracy.
    Train(TrainArgs),
    /// Export normalized KC score distributions.
    Dist(DistArgs),
    /// Accuracy over a grid of pruning ratios, strategies and seeds.
    Sweep(SweepArgs),
    /// Generate a stochastic block model graph.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Naive,
    Fast,
}

impl From<MethodArg> for kces::Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Naive => kces::Method::Naive,
            MethodArg::Fast => kces::Method::Fast,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingArg {
    OneHot,
    SignedBinary,
    ScalarTruth,
}

impl From<EncodingArg> for kces::Encoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::OneHot => kces::Encoding::OneHot,
            EncodingArg::SignedBinary => kces::Encoding::SignedBinary,
            EncodingArg::ScalarTruth => kces::Encoding::ScalarTruth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    HighKc,
    LowKc,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackArg {
    Random,
    Dice,
}

/// Graph inputs shared by every graph command.
#[derive(Debug, Args, Serialize)]
pub struct GraphInput {
    /// Edge list, one `u<TAB>v` per line.
    #[arg(long)]
    pub edges: PathBuf,
    /// Headerless CSV, one row per node.
    #[arg(long)]
    pub features: PathBuf,
}

/// How KC scores are computed.
#[derive(Debug, Args, Serialize)]
pub struct ScoringArgs {
    /// Ground-truth class ids, one per line; replaces pseudo labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Number of k-means clusters for pseudo labels.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MethodArg::Fast)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = EncodingArg::OneHot)]
    pub encoding: EncodingArg,
    /// k-means restarts.
    #[arg(long, default_value_t = kces::pseudolabel::DEFAULT_RESTARTS)]
    pub restarts: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub graph: GraphInput,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// Score TSV (`u<TAB>v<TAB>score<TAB>method`).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional binary dump of the Gram matrix.
    #[arg(long)]
    pub gram_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PruneArgs {
    #[command(flatten)]
    pub graph: GraphInput,
    /// Precomputed score TSV; scores are computed inline when absent.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = StrategyArg::HighKc)]
    pub strategy: StrategyArg,
    /// Sanitized edge list.
    #[arg(long)]
    pub out: PathBuf,
    /// Removed edges (defaults to `<out>.plan.tsv`).
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AttackArgs {
    #[command(flatten)]
    pub graph: GraphInput,
    #[arg(long, value_enum)]
    pub kind: AttackArg,
    /// Class ids for DICE; pseudo labels from `--k` are used otherwise.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.25)]
    pub budget_ratio: f64,
    #[arg(long, default_value_t = 0.5)]
    pub add_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attacked edge list.
    #[arg(long)]
    pub out: PathBuf,
    /// Perturbation record (defaults to `<out>.record.tsv`).
    #[arg(long)]
    pub record_out: Option<PathBuf>,
}

/// Network and optimizer settings.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Hidden width.
    #[arg(long, default_value_t = 512)]
    pub m: usize,
    /// Step size, or `auto` for 1/λ_max of the training Gram matrix.
    #[arg(long, default_value = "auto")]
    pub eta: String,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub graph: GraphInput,
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Initialization seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Accuracy report CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace prefix; writes `<prefix>.class<c>.csv` per class.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DistArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub attacked: Option<PathBuf>,
    #[arg(long)]
    pub pruned: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// Edges sampled per variant.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Receives `<variant>.csv` for each graph given.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub graph: GraphInput,
    /// Class ids used for accuracy.
    #[arg(long)]
    pub labels: PathBuf,
    /// Pseudo-label clusters for scoring (defaults to the number of classes).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StrategyArg::HighKc, StrategyArg::Random, StrategyArg::LowKc])]
    pub strategies: Vec<StrategyArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
    pub seeds: Vec<u64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Fast)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = EncodingArg::OneHot)]
    pub encoding: EncodingArg,
    #[arg(long, default_value_t = kces::pseudolabel::DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.1)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    pub p_out: f64,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub signal: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub edges_out: PathBuf,
    #[arg(long)]
    pub features_out: PathBuf,
    #[arg(long)]
    pub labels_out: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Input => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Config => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(4);
        }
    }
    let manifest_out = cli.manifest_out.as_deref();
    let result = match &cli.command {
        Command::Score(a) => commands::score(a, manifest_out),
        Command::Prune(a) => commands::prune(a, manifest_out),
        Command::Attack(a) => commands::attack(a, manifest_out),
        Command::Train(a) => commands::train(a, manifest_out),
        Command::Dist(a) => commands::dist(a, manifest_out),
        Command::Sweep(a) => commands::sweep(a, manifest_out),
        Command::Synth(a) => commands::synth(a, manifest_out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
