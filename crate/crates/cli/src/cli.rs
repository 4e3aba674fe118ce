//! Command-line surface: seven verbs over one config file.
//!
//! Every flag here is an override; the TOML config supplies the rest. Flags
//! win over config so a run's deltas are visible in its invocation line.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "bacalarm",
    version,
    about = "Mine API knowledge, simulate labeled traffic, and detect broken access control"
)]
pub struct Cli {
    /// Pipeline configuration file (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed override for any randomized stage.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Use the deterministic offline generator instead of a live LLM.
    #[arg(long, global = true)]
    pub offline: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an access log and mine its endpoint templates into a knowledge base.
    Mine(MineArgs),
    /// Generate a labeled composite traffic corpus from a knowledge base.
    Simulate(SimulateArgs),
    /// Turn a labeled corpus into a feature matrix.
    Featurize(FeaturizeArgs),
    /// Train the gated ensemble detector on a labeled corpus.
    Train(TrainArgs),
    /// Score unlabeled traffic and emit per-sequence verdicts.
    Detect(DetectArgs),
    /// Evaluate a trained bundle on held-out data and write a metric report.
    Eval(EvalArgs),
    /// Render a machine-readable metrics file as markdown.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Access log to mine.
    #[arg(long, value_name = "PATH")]
    pub log: Option<PathBuf>,
    /// Knowledge-base output path.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Drain similarity threshold in (0, 1].
    #[arg(long, value_name = "F64")]
    pub similarity_threshold: Option<f64>,
    /// Drain tree depth.
    #[arg(long, value_name = "USIZE")]
    pub depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Knowledge base to draw endpoints from.
    #[arg(long, value_name = "PATH")]
    pub kb: Option<PathBuf>,
    /// Corpus output path.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Kept-sequence target.
    #[arg(long, value_name = "USIZE")]
    pub n: Option<usize>,
    /// Generation-report output path.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Target application base URL (live mode).
    #[arg(long, value_name = "URL")]
    pub target_url: Option<String>,
    /// LLM endpoint base URL (live mode).
    #[arg(long, value_name = "URL")]
    pub llm_url: Option<String>,
    /// Worker threads for the generation cycle.
    #[arg(long, value_name = "USIZE")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Labeled corpus input.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Knowledge base for tokenization.
    #[arg(long, value_name = "PATH")]
    pub kb: Option<PathBuf>,
    /// Model bundle supplying the sequence model (deviation column is 0 without it).
    #[arg(long, value_name = "PATH")]
    pub bundle: Option<PathBuf>,
    /// Feature-matrix CSV output path.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled corpus input.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Knowledge base for tokenization.
    #[arg(long, value_name = "PATH")]
    pub kb: Option<PathBuf>,
    /// Bundle output directory.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Sequence-model backend: "ngram" or "attention".
    #[arg(long, value_name = "NAME")]
    pub backend: Option<String>,
    /// Stratified train share in (0, 1); the rest is held out for eval.
    #[arg(long, value_name = "F64")]
    pub train_frac: Option<f64>,
    /// Decision threshold stored in the bundle.
    #[arg(long, value_name = "F64")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Unlabeled access log to score.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Knowledge base the bundle was trained against.
    #[arg(long, value_name = "PATH")]
    pub kb: Option<PathBuf>,
    /// Trained model bundle directory.
    #[arg(long, value_name = "PATH")]
    pub bundle: Option<PathBuf>,
    /// Verdicts output path (one JSON line per sequence).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Session inactivity gap in milliseconds.
    #[arg(long, value_name = "I64")]
    pub gap_ms: Option<i64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labeled corpus to split and score.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Knowledge base for tokenization.
    #[arg(long, value_name = "PATH")]
    pub kb: Option<PathBuf>,
    /// Trained model bundle directory.
    #[arg(long, value_name = "PATH")]
    pub bundle: Option<PathBuf>,
    /// Report output directory (report.md + metrics.json).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Stratified train share; evaluation uses the complement.
    #[arg(long, value_name = "F64")]
    pub train_frac: Option<f64>,
    /// Decision threshold override (bundle's otherwise).
    #[arg(long, value_name = "F64")]
    pub threshold: Option<f64>,
    /// Evaluate this whole corpus instead of a held-out split.
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// metrics.json produced by eval.
    #[arg(long, value_name = "PATH")]
    pub metrics: Option<PathBuf>,
}
