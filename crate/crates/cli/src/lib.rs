//! The `rumorscope` command line: each pipeline stage is a subcommand that
//! reads files and writes an output directory with a manifest.

pub mod config;
pub mod files;
mod stages;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rumorscope_core::active::QueryStrategy;
use thiserror::Error;

use crate::config::RunConfig;
use crate::files::named_path;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, missing inputs or an invalid configuration.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rumorscope",
    version,
    about = "Filter, classify and characterize misinformation tweets"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory of the stage.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read JSONL files, keep one language, drop duplicates.
    Ingest(IngestArgs),
    /// Split a corpus into per-theory datasets and count overlaps.
    Filter(FilterArgs),
    /// Draw a deduplicated annotation sample from a theory dataset.
    Sample(SampleArgs),
    /// Split labelled tweets, train a forest and score it.
    Train(TrainArgs),
    /// Run active-learning cycles with a terminal, scripted or HTTP oracle.
    Active(ActiveArgs),
    /// Label whole theory datasets with trained models.
    Classify(ClassifyArgs),
    /// Score tweets with the lexicons and aggregate per day and class.
    Sentiment(SentimentArgs),
    /// Fit dynamic topic models over weekly slices.
    Dtm(DtmArgs),
    /// Collate stage outputs into tables, series and figures.
    Report(ReportArgs),
    /// Serve an existing labelling session over HTTP.
    Serve(ServeArgs),
    /// Agreement and Cohen's kappa between two label tables.
    Agree(AgreeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSONL input files, read in the order given.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Language tag prefix to keep ("" keeps all).
    #[arg(long)]
    pub lang: Option<String>,
    /// Deduplicate by tweet id or by normalized text.
    #[arg(long, value_enum)]
    pub dedup: Option<DedupArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum DedupArg {
    Id,
    Text,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Theory pattern file (TOML); the bundled illustrative set if omitted.
    #[arg(long)]
    pub theories: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Tweets to draw before deduplication.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Theory dataset (JSONL) that supplies the vocabulary and the rows.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Label table: tweet_id,label[,annotator_id].
    #[arg(long)]
    pub labels: PathBuf,
    /// Name used in tables (default: dataset file stem).
    #[arg(long)]
    pub theory: Option<String>,
    /// Corpus used to resolve reply and retweet links (default: the dataset).
    #[arg(long)]
    pub context: Option<PathBuf>,
    /// Flagged-domain CSV (domain,flag).
    #[arg(long)]
    pub domains: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ActiveArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory of `train` for the same dataset.
    #[arg(long)]
    pub train_dir: PathBuf,
    /// Answer queries from this label table instead of prompting.
    #[arg(long)]
    pub oracle_labels: Option<PathBuf>,
    /// Hand the session to the HTTP server instead of prompting.
    #[arg(long)]
    pub serve: bool,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Session directory (default: <out>/session). Reopened if it exists.
    #[arg(long)]
    pub session_dir: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub annotator: Option<String>,
    #[arg(long)]
    pub context: Option<PathBuf>,
    #[arg(long)]
    pub domains: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum StrategyArg {
    Entropy,
    Random,
}

impl From<StrategyArg> for QueryStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Entropy => QueryStrategy::Entropy,
            StrategyArg::Random => QueryStrategy::Random,
        }
    }
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Output directory of `filter`.
    #[arg(long)]
    pub filter_dir: PathBuf,
    /// THEORY=DIR with model.json and vocab.json (from `train` or `active`).
    #[arg(long = "model", value_parser = named_path, required = true)]
    pub models: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub context: Option<PathBuf>,
    #[arg(long)]
    pub domains: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SentimentArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Labels or predictions (tweet_id,label...) defining the classes.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct DtmArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Labels or predictions; with them only tweets of `--class` are modeled.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "misinfo")]
    pub class: ClassArg,
    /// Topic counts to fit, e.g. 2,3,4,5.
    #[arg(long, value_delimiter = ',')]
    pub topics: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ClassArg {
    Misinfo,
    NotMisinfo,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub filter_dir: Option<PathBuf>,
    #[arg(long)]
    pub classify_dir: Option<PathBuf>,
    /// Output directories of `train` or `active`, in table order.
    #[arg(long = "model-dir")]
    pub model_dirs: Vec<PathBuf>,
    /// THEORY=DIR output of `sentiment`.
    #[arg(long = "sentiment", value_parser = named_path)]
    pub sentiment: Vec<(String, PathBuf)>,
    /// NAME=DIR output of `dtm`.
    #[arg(long = "dtm", value_parser = named_path)]
    pub dtm: Vec<(String, PathBuf)>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long)]
    pub session_dir: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub cycles: Option<usize>,
    /// Directory with the built annotation UI.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

/// Effective configuration: file, then global flags.
pub fn effective_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if global.threads.is_some() {
        config.threads = global.threads;
    }
    Ok(config)
}

pub fn out_dir(global: &GlobalArgs) -> Result<PathBuf, CliError> {
    global
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required for this command".into()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = effective_config(&cli.global)?;
    if let Some(n) = config.threads {
        // a second call in the same process keeps the first pool
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::debug!("thread pool already set: {e}");
        }
    }
    stages::apply_flags(&cli.command, &mut config);
    config.validate()?;
    stages::dispatch(cli.command, &cli.global, &config)
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Runtime(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}
