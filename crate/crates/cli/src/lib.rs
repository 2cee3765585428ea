//! The `pude` command line: synthetic data, training, evaluation, ranking
//! and label-ratio sweeps. Every command reads and writes plain files so
//! runs compose into pipelines.

pub mod args;
mod commands;
pub mod config;

use args::{HyperArgs, Method};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub use commands::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for configuration errors, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pude",
    version,
    about = "Positive-unlabeled document set expansion"
)]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a two-Gaussian synthetic corpus.
    Synth(SynthArgs),
    /// Validate an embedding file and its optional tokens.
    EmbedCheck(CorpusArgs),
    /// Train a scorer on LP ∪ U.
    Train(TrainArgs),
    /// Score U with a trained model and measure it against ground truth.
    Eval(EvalArgs),
    /// Score and rank U without touching ground truth.
    Rank(RankArgs),
    /// Run experiments over a grid of |LP|/|U| ratios.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Probability that a document is positive.
    #[arg(long, default_value_t = 0.5)]
    pub pi: f64,
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Component means sit at ±separation on the first axis.
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub std: f64,
    #[arg(long, default_value = "doc")]
    pub prefix: String,
    /// Output directory; receives corpus.pue and synth.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// PUE1 embedding file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON-lines tokens for BM25.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, required_unless_present = "config")]
    pub method: Option<Method>,
    #[arg(long, required_unless_present = "config")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    /// Number of labelled positives drawn from the corpus.
    #[arg(long, conflicts_with = "task")]
    pub lp_count: Option<usize>,
    /// Seed for drawing LP; defaults to --seed.
    #[arg(long, conflicts_with = "task")]
    pub task_seed: Option<u64>,
    /// Existing task.json instead of drawing LP.
    #[arg(long)]
    pub task: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Replay the config.json of an earlier run; excludes every other
    /// option except --out.
    #[arg(long, conflicts_with_all = ["method", "corpus", "tokens", "lp_count", "task_seed", "task"])]
    pub config: Option<PathBuf>,
    /// Output directory; receives model.bin, trace.csv, config.json, task.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus to score; defaults to the training corpus, and must match it.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub tokens: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// fixed-logit[:t], sigmoid[:p], top-fraction:f or top-count:K; defaults
    /// to the method's natural zero point.
    #[arg(long)]
    pub threshold: Option<String>,
    /// Output directory; receives report.jsonl and eval.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory; receives ranking.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// The unlabelled set U.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Candidate labelled positives; disjoint from U.
    #[arg(long)]
    pub pool: PathBuf,
    /// Tokens for documents of either file.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pude-em")]
    pub methods: Vec<Method>,
    /// |LP|/|U| ratios; defaults to 0.01..0.09 then 0.1..1.0.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output directory; receives sweep.csv and config.json.
    #[arg(long)]
    pub out: PathBuf,
}
