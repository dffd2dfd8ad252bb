//! `mtcascade`: train, calibrate, replay and serve the NMT/LLM router.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use mtcascade::decider::Policy;
use mtcascade::{LanguagePair, ScoreKind};

/// A problem with the invocation itself rather than with the work it asked for.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

macro_rules! usage {
    ($($fmt:tt)+) => {
        return Err(anyhow::Error::new($crate::UsageError(format!($($fmt)+))))
    };
}
pub(crate) use usage;

#[derive(Debug, Parser)]
#[command(name = "mtcascade", version, about = "Cost-aware NMT/LLM translation routing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an n-gram language model on a one-sentence-per-line corpus.
    TrainLm(TrainLmArgs),
    /// Fit a policy threshold so that a target share of traffic goes to the LLM.
    Calibrate(CalibrateArgs),
    /// Pick positive and negative training samples for the JDM classifier.
    SelectJdmSamples(SelectJdmArgs),
    /// Train the JDM classifier on selected samples.
    TrainJdm(TrainJdmArgs),
    /// Replay a scored dataset under one policy.
    Replay(ReplayArgs),
    /// Sweep a policy's control parameter and emit the quality/cost curve.
    Sweep(SweepArgs),
    /// Run the HTTP router.
    Serve(ServeArgs),
    /// Compare saved replay reports side by side.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SmoothingArg {
    Kn,
    AddK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TokenizerArg {
    Whitespace,
    Character,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=5))]
    pub order: u32,
    #[arg(long, value_enum, default_value_t = SmoothingArg::Kn)]
    pub smoothing: SmoothingArg,
    /// Pseudo-count for add-k smoothing.
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub min_count: u32,
    #[arg(long, value_enum, default_value_t = TokenizerArg::Whitespace)]
    pub tokenizer: TokenizerArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Builtin,
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct ScorerArgs {
    /// Defaults to remote when a scorer URL is configured, builtin otherwise.
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerArg>,
    #[arg(long, env = "MTCASCADE_SCORER_URL")]
    pub scorer_url: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub scorer_timeout_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub scorer_retries: u32,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// JSONL evaluation records.
    #[arg(long)]
    pub records: PathBuf,
    /// Skip malformed lines with a warning instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Qet,
    Pplt,
    Jdm,
}

#[derive(Debug, Clone, Args)]
pub struct JdmSelectionArgs {
    #[arg(long, default_value_t = 0.10, value_parser = fraction)]
    pub t1_fraction: f64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_pos: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub neg_ratio: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Share of traffic to send to the LLM.
    #[arg(long, default_value_t = 0.25, value_parser = fraction)]
    pub fraction: f64,
    /// Thresholds file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Existing thresholds to extend; other fields are kept.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Language pair; defaults to the pair of the records.
    #[arg(long)]
    pub pair: Option<LanguagePair>,
    /// Scored records (qet, jdm).
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub lenient: bool,
    /// Monolingual corpus (pplt).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Language model (pplt).
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[command(flatten)]
    pub jdm: JdmSelectionArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
}

#[derive(Debug, Args)]
pub struct SelectJdmArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Directory receiving positives.jsonl, negatives.jsonl and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub jdm: JdmSelectionArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
}

#[derive(Debug, Args)]
pub struct TrainJdmArgs {
    /// Directory written by select-jdm-samples.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DeciderArgs {
    /// Decider spec (JSON); flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub decision_boundary: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub decider: DeciderArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// Quality scale used for the report.
    #[arg(long, default_value = "reference_based")]
    pub mode: ScoreKind,
    /// Annotation key to break results down by.
    #[arg(long)]
    pub group_by: Option<String>,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-record decisions as JSONL.
    #[arg(long)]
    pub decisions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub decider: DeciderArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long, default_value = "reference_based")]
    pub mode: ScoreKind,
    /// Comma-separated control values (threshold or decision boundary).
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub values: Vec<f64>,
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Router config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured listen address.
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long, env = "MTCASCADE_NMT_URL")]
    pub nmt_url: Option<String>,
    #[arg(long, env = "MTCASCADE_LLM_URL")]
    pub llm_url: Option<String>,
    #[arg(long, env = "MTCASCADE_SCORER_URL")]
    pub scorer_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Replay report JSON files.
    #[arg(long, required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out_text: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Also print the per-group NMT/LLM table for each grouped report.
    #[arg(long)]
    pub difficulty: bool,
}

fn fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| {
        e.is::<UsageError>() || matches!(e.downcast_ref::<mtcascade::Error>(), Some(mtcascade::Error::Config(_)))
    });
    if validation {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,mtcascade=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
