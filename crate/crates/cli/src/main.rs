//! Command-line driver for the expressiveness pipeline.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use expressiveness::models::Algorithm;
use expressiveness::ModalitySelection;

use crate::config::RunConfig;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "EXPRESSIVENESS_OUT";
const DEFAULT_OUT: &str = "out";

/// A problem with the invocation or configuration rather than the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(
    name = "expressiveness",
    version,
    about = "Measure and predict perceived emotional expressiveness"
)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (required by cfa, evaluate, compare and synth).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for evaluate; 0 uses all cores.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory [default: config `out`, then $EXPRESSIVENESS_OUT, then ./out].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average-measures agreement ICC per rating question.
    Reliability(ReliabilityArgs),
    /// One-factor Bayesian CFA, fit indices and factor scores.
    Cfa(CfaArgs),
    /// Visual signals from per-participant face-tracking CSVs.
    FeaturesVisual(VisualArgs),
    /// Linguistic signals from transcripts and a lexicon.
    FeaturesLinguistic(LinguisticArgs),
    /// Repeated nested cross-validation.
    Evaluate(EvaluateArgs),
    /// Paired bootstrap comparison of modalities.
    Compare(CompareArgs),
    /// Elastic Net coefficient distribution across tuned models.
    Coefficients(CoefficientsArgs),
    /// Seeded synthetic dataset with ratings.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ReliabilityArgs {
    /// Long-format ratings CSV `video_id,rater_id,question_id,score`.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CfaArgs {
    /// Long-format ratings CSV, averaged per participant and question.
    #[arg(long, conflicts_with = "indicators")]
    pub ratings: Option<PathBuf>,
    /// Averaged ratings CSV `participant_id,<question>,...`.
    #[arg(long)]
    pub indicators: Option<PathBuf>,
    /// Traits CSV for external-validity correlations.
    #[arg(long)]
    pub traits: Option<PathBuf>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub kept: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VisualArgs {
    /// Track CSVs or directories of them; the file stem is the participant id.
    #[arg(long, num_args = 1..)]
    pub tracks: Vec<PathBuf>,
    /// Frames per averaging window.
    #[arg(long)]
    pub window: Option<usize>,
    /// Drop frames whose tracking-success flag is 0 before averaging.
    #[arg(long)]
    pub exclude_failed_frames: bool,
}

#[derive(Debug, Args)]
pub struct LinguisticArgs {
    /// Transcript CSV `participant_id,utterance`.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    /// Plain-text transcripts, one per participant (file stem is the id).
    #[arg(long, num_args = 1.., conflicts_with = "transcripts")]
    pub texts: Vec<PathBuf>,
    /// Lexicon JSON: category -> patterns.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// External dimensions CSV `participant_id,analytic,clout,authentic,tone`.
    #[arg(long)]
    pub external: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset manifest JSON.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<Algorithm>,
    #[arg(long, value_delimiter = ',')]
    pub modalities: Vec<ModalitySelection>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub k_outer: Option<usize>,
    #[arg(long)]
    pub k_inner: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// `models.jsonl` written by evaluate.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    /// Modality pairs as `a-b`, e.g. `visual-multimodal`.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<expressiveness::evaluation::Metric>,
    #[arg(long)]
    pub resamples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CoefficientsArgs {
    /// `models.jsonl` written by evaluate.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub modality: Option<ModalitySelection>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of interaction groups.
    #[arg(long)]
    pub groups: Option<usize>,
}

/// Settings shared by every subcommand after merging flags and config.
pub struct Context {
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub out: PathBuf,
}

impl Context {
    pub fn require_seed(&self, command: &str) -> Result<u64, UsageError> {
        self.seed.ok_or_else(|| {
            UsageError(format!(
                "`{command}` needs a seed: pass --seed or set `seed` in the config"
            ))
        })
    }
}

fn context(cli: &Cli) -> Result<Context, UsageError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Context {
        seed: cli.seed.or(config.seed),
        jobs: cli.jobs.or(config.jobs).unwrap_or(0),
        out,
        config,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = context(&cli)?;
    match cli.command {
        Command::Reliability(a) => commands::reliability(&ctx, a),
        Command::Cfa(a) => commands::cfa(&ctx, a),
        Command::FeaturesVisual(a) => commands::features_visual(&ctx, a),
        Command::FeaturesLinguistic(a) => commands::features_linguistic(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Compare(a) => commands::compare(&ctx, a),
        Command::Coefficients(a) => commands::coefficients(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            eprintln!("run `expressiveness --help` for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
