//! `tokvar` command line: `sample`, `score`, `analyze`, `compare`, `ablate`.
//!
//! Each subcommand reads files, writes its outputs plus a `manifest.json`
//! into `--out`, and exits with one of the [`ExitKind`] codes.

mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analytics::{AblationAxis, AnalyticsError, DEFAULT_BINS, DEFAULT_MAX_POSITION};
use crate::detector::{DetectorConfig, VarianceDenominator};
use crate::sampler::SamplerError;
use crate::trace::{Adapter, TraceError, DEFAULT_CONTEXT_LIMIT};

pub use manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "tokvar",
    version,
    about = "Token-level hallucination detection from log-probability variance"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw stochastic generations for every prompt and append them to a trace file.
    Sample(SampleArgs),
    /// Score a trace file token by token.
    Score(ScoreArgs),
    /// Rates, position profiles, variance distributions and heatmap data.
    Analyze(AnalyzeArgs),
    /// Per-position KL divergence and mean-variance gap between two scored runs.
    Compare(CompareArgs),
    /// Sweep threshold, sample count or length bucket over a trace file.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub adapter: Adapter,
    #[arg(long, env = "TOKVAR_BACKEND_URL", required_unless_present = "mock")]
    pub backend_url: Option<String>,
    #[arg(long, env = "TOKVAR_MODEL")]
    pub model: Option<String>,
    /// Use the built-in seeded mock backend instead of HTTP.
    #[arg(long)]
    pub mock: bool,
    /// JSON `MockModelSpec`; defaults to a zero-noise spec.
    #[arg(long, requires = "mock")]
    pub mock_spec: Option<PathBuf>,
    #[arg(long, env = "TOKVAR_API_KEY_ENV", default_value = "TOKVAR_API_KEY")]
    pub api_key_env: String,
    #[arg(long, env = "TOKVAR_NUM_SAMPLES", default_value_t = 3)]
    pub num_samples: usize,
    #[arg(long, env = "TOKVAR_TEMPERATURE", default_value_t = 0.9)]
    pub temperature: f64,
    #[arg(long, env = "TOKVAR_TOP_P", default_value_t = 0.95)]
    pub top_p: f64,
    /// 0 disables top-k.
    #[arg(long, env = "TOKVAR_TOP_K", default_value_t = 50)]
    pub top_k: u32,
    /// Omit `top_k` from requests for servers that reject it.
    #[arg(long)]
    pub no_top_k: bool,
    #[arg(long, env = "TOKVAR_MAX_NEW_TOKENS", default_value_t = 40)]
    pub max_new_tokens: u32,
    #[arg(long, env = "TOKVAR_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_CONTEXT_LIMIT)]
    pub context_limit: usize,
    #[arg(long, default_value_t = 3)]
    pub max_concurrency: usize,
    #[arg(long, default_value_t = 3)]
    pub max_retries: usize,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DetectorArgs {
    #[arg(long, env = "TOKVAR_THRESHOLD", default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, value_enum, env = "TOKVAR_DENOMINATOR", default_value = "n")]
    pub denominator: VarianceDenominator,
    #[arg(long, env = "TOKVAR_MIN_SUPPORT", default_value_t = 2)]
    pub min_support: usize,
}

impl DetectorArgs {
    pub fn config(&self) -> DetectorConfig {
        DetectorConfig {
            threshold: self.threshold,
            variance_denominator: self.denominator,
            min_support: self.min_support,
            ..DetectorConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Trace file written by `sample`.
    pub trace: PathBuf,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Scored files written by `score`.
    #[arg(required = true)]
    pub scored: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_POSITION)]
    pub max_position: usize,
    /// Emit heatmap data for this prompt id (must be present in every file).
    #[arg(long)]
    pub heatmap_prompt: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub scored_a: PathBuf,
    pub scored_b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_POSITION)]
    pub max_position: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    pub trace: PathBuf,
    #[arg(long, value_enum)]
    pub axis: AblationAxis,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure classes and their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    Config,
    InputFormat,
    Backend,
    Internal,
}

impl ExitKind {
    pub fn code(self) -> u8 {
        match self {
            ExitKind::Config => 2,
            ExitKind::InputFormat => 3,
            ExitKind::Backend => 4,
            ExitKind::Internal => 5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Config,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::InputFormat,
            message: message.into(),
        }
    }

    pub fn backend(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Backend,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Internal,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Invalid(_) => CliError::config(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Config(_) => CliError::config(e.to_string()),
            _ => CliError::backend(e.to_string()),
        }
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Invalid(_) => CliError::config(e.to_string()),
            AnalyticsError::Csv(_) => CliError::internal(e.to_string()),
            AnalyticsError::Io(inner) => inner.into(),
            _ => CliError::input(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::config(e.to_string()))?;
    let command_line = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    commands::dispatch(cli.command, command_line)
}

/// Process entry point used by the `tokvar` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<OsString> = std::env::args_os().collect();
    // Let clap print help and version itself.
    if let Err(e) = Cli::try_parse_from(&args) {
        if !e.use_stderr() {
            e.exit();
        }
    }
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let summary = serde_json::json!({ "error": e });
            eprintln!("{summary}");
            ExitCode::from(e.kind.code())
        }
    }
}
