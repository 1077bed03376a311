//! `guardlab`: score, evaluate, train and calibrate guard models on
//! paraphrase sets.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 service error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use guardlab_core::aggregate::StrategyKind;
use guardlab_core::synth::OutlierMode;
use guardlab_core::trainer::VarianceFilter;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(guardlab_core::Error),
    Service(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Internal(_) => 2,
            CliError::Service(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::Service(m) => write!(f, "service error: {m}"),
            CliError::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<guardlab_core::Error> for CliError {
    fn from(e: guardlab_core::Error) -> Self {
        match e {
            guardlab_core::Error::InvalidParameter(m) => CliError::Usage(m),
            other => CliError::Data(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "guardlab", version, about = "Paraphrase robustness toolkit for guard-model safety scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label-flip rates and dispersion for scored (or scorer-scored) sets.
    Eval(EvalArgs),
    /// Fit a linear scorer with the anchor loss on filtered sets.
    Train(TrainArgs),
    /// Fit a post-hoc temperature on a validation file.
    Calibrate(CalibrateArgs),
    /// Precision/recall tables for judged paraphrase pairs.
    JudgeSweep(JudgeSweepArgs),
    /// Fill in scores by calling the scoring service.
    Score(ScoreArgs),
    /// Ask the judge service whether sentence pairs mean the same thing.
    Judge(JudgeArgs),
    /// Write a seeded synthetic corpus for trying the pipeline end to end.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Mean,
    Median,
    Skew,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Mean => StrategyKind::Mean,
            StrategyArg::Median => StrategyKind::Median,
            StrategyArg::Skew => StrategyKind::SkewAware,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VarianceFilterArg {
    KeepHigh,
    KeepLow,
    Disabled,
}

impl From<VarianceFilterArg> for VarianceFilter {
    fn from(v: VarianceFilterArg) -> Self {
        match v {
            VarianceFilterArg::KeepHigh => VarianceFilter::KeepHigh,
            VarianceFilterArg::KeepLow => VarianceFilter::KeepLow,
            VarianceFilterArg::Disabled => VarianceFilter::Disabled,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutlierModeArg {
    Random,
    Upward,
    AgainstLabel,
}

impl From<OutlierModeArg> for OutlierMode {
    fn from(m: OutlierModeArg) -> Self {
        match m {
            OutlierModeArg::Random => OutlierMode::Random,
            OutlierModeArg::Upward => OutlierMode::Upward,
            OutlierModeArg::AgainstLabel => OutlierMode::AgainstLabel,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Directory receiving report files; created if missing.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv")]
    pub format: Vec<Format>,
}

impl OutputArgs {
    pub fn wants(&self, f: Format) -> bool {
        self.format.contains(&f)
    }
}

#[derive(Debug, Args)]
pub struct StrategyArgs {
    #[arg(long, value_enum, default_value = "skew")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 0.1)]
    pub skew_threshold: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub sets: PathBuf,
    /// Re-score every member with this scorer instead of using stored scores.
    #[arg(long, requires = "features")]
    pub scorer: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Labeled feature vectors for accuracy, F1 and ECE; needs --scorer.
    #[arg(long, requires = "scorer")]
    pub labeled: Option<PathBuf>,
    /// Model name written into table rows.
    #[arg(long, default_value = "model")]
    pub name: String,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long, default_value_t = 10)]
    pub ece_bins: usize,
    /// Restrict the per-paraphrase table to sets whose original is safe.
    #[arg(long)]
    pub original_safe_only: bool,
    /// Worker threads for per-set metrics; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub sets: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Starting scorer; a small random one is drawn from --seed otherwise.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Held-out sets evaluated before (with --init) and after training.
    #[arg(long)]
    pub eval_sets: Option<PathBuf>,
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long, default_value_t = 4)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_sets: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub min_std: f64,
    #[arg(long, default_value_t = 3)]
    pub min_set_size: usize,
    #[arg(long, value_enum, default_value = "keep-high")]
    pub variance_filter: VarianceFilterArg,
    /// Leave the original out of the target and the loss.
    #[arg(long)]
    pub exclude_original: bool,
    #[arg(long, default_value_t = 10)]
    pub ece_bins: usize,
    /// Where the trained scorer is written.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// JSONL of {"score", "gold"} records.
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub t_min: f64,
    #[arg(long, default_value_t = 5.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 10)]
    pub ece_bins: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct JudgeSweepArgs {
    /// Judged pairs with gold similarity.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.6,0.7,0.75,0.8")]
    pub sim_thresholds: Vec<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub sim_threshold: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9,0.95,0.98,0.99")]
    pub prob_thresholds: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ServiceArgs {
    /// Base URL of the scoring service.
    #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
    pub service: Option<String>,
    /// Answer requests from a recorded transcript instead of the network.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Environment variable holding the bearer token.
    #[arg(long, default_value = guardlab_client::DEFAULT_TOKEN_ENV)]
    pub token_env: String,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 30.0)]
    pub timeout_secs: f64,
    #[arg(long, default_value_t = 250)]
    pub backoff_ms: u64,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub sets: PathBuf,
    /// Scored sets are written here; may equal --sets.
    #[arg(long)]
    pub out: PathBuf,
    /// Re-score members that already have a score.
    #[arg(long)]
    pub overwrite: bool,
    #[command(flatten)]
    pub service: ServiceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// JSONL of {"a", "b", "gold_similarity"?} records.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub service: ServiceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub train_sets: usize,
    #[arg(long, default_value_t = 100)]
    pub heldout_sets: usize,
    #[arg(long, default_value_t = 1000)]
    pub labeled: usize,
    #[arg(long, value_enum, default_value = "random")]
    pub mode: OutlierModeArg,
    /// Size of the overconfident validation file.
    #[arg(long, default_value_t = 10_000)]
    pub validation: usize,
    /// Number of judged pairs with gold similarity.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let result = match cli.command {
        Command::Eval(a) => commands::eval(a, argv),
        Command::Train(a) => commands::train(a, argv),
        Command::Calibrate(a) => commands::calibrate(a, argv),
        Command::JudgeSweep(a) => commands::judge_sweep(a, argv),
        Command::Score(a) => commands::score(a, argv),
        Command::Judge(a) => commands::judge(a, argv),
        Command::Synth(a) => commands::synth(a, argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("guardlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
