// SPDX-License-Identifier: MIT OR Apache-2.0

//! `ndesteer` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 data or format, 3 network.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndesteer::eval::Strategy;
use ndesteer::{AttentionMode, LayerSelection};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ndesteer::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_network() => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "ndesteer", version, about = "Estimate, apply and evaluate direct-effect steering directions")]
struct Cli {
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded toy model checkpoint.
    Init(InitArgs),
    /// Estimate vision, text and cross-modal directions.
    Estimate(EstimateArgs),
    /// Greedy decoding, optionally with an intervention.
    Generate(GenerateArgs),
    /// Build yes/no object questions and score answers.
    EvalPope(PopeArgs),
    /// Judge free-form answers and aggregate per category.
    EvalMmhal(MmhalArgs),
    /// Oracle contrasts on a linear causal model and planted-direction recovery.
    SimulateScg(ScgArgs),
    /// Pretty-print any artifact file.
    Inspect(InspectArgs),
    /// Print the resolved run configuration.
    Defaults(CommonArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    directions: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f32>,
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f32>,
    #[arg(long, allow_negative_numbers = true)]
    c: Option<f32>,
    /// `all` or a comma-separated list of layer indices.
    #[arg(long)]
    layers: Option<LayerSelection>,
    /// Refuse directions estimated on a different checkpoint.
    #[arg(long)]
    strict_digest: bool,
    #[arg(long)]
    pca_dim: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Masks per image.
    #[arg(long)]
    masks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Yes-questions (and no-questions) per image.
    #[arg(long)]
    k: Option<usize>,
    /// Synthetic annotation count when no annotation file is given.
    #[arg(long)]
    n_images: Option<usize>,
    #[arg(long)]
    max_new: Option<usize>,
    #[arg(long)]
    judge_endpoint: Option<String>,
    #[arg(long)]
    stub_judge: bool,
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Judge scores below this count as hallucinations.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            model: self.model.clone(),
            directions: self.directions.clone(),
            a: self.a,
            b: self.b,
            c: self.c,
            layers: self.layers.clone(),
            strict_digest: self.strict_digest.then_some(true),
            pca_dim: self.pca_dim,
            n_samples: self.n_samples,
            masks: self.masks,
            seed: self.seed,
            strategy: self.strategy,
            k: self.k,
            n_images: self.n_images,
            max_new: self.max_new,
            judge_endpoint: self.judge_endpoint.clone(),
            stub_judge: self.stub_judge.then_some(true),
            timeout_ms: self.timeout_ms,
            threshold: self.threshold,
            out: self.out.clone(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PrefixBidirectional,
    FullyCausal,
}

impl From<ModeArg> for AttentionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PrefixBidirectional => AttentionMode::PrefixBidirectional,
            ModeArg::FullyCausal => AttentionMode::FullyCausal,
        }
    }
}

#[derive(Args)]
pub struct InitArgs {
    #[arg(long, default_value_t = 32)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    n_layers: usize,
    #[arg(long, default_value_t = 4)]
    n_heads: usize,
    #[arg(long, value_enum, default_value = "prefix-bidirectional")]
    attention_mode: ModeArg,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EstimateArgs {
    /// JSONL caption pairs `{"original", "hallucinated"}`; synthetic when absent.
    #[arg(long)]
    captions: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    prompt: String,
    /// TNSR image; a seeded synthetic image when absent.
    #[arg(long)]
    image: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct PopeArgs {
    /// JSONL `{"image_id", "present"}`; synthetic when absent.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// JSONL `{"question_id", "answer"}`; the model answers when absent.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    questions_out: Option<PathBuf>,
    #[arg(long)]
    predictions_out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct MmhalArgs {
    /// JSONL `{"question_id", "category", "question", "response", "reference"}`,
    /// optionally with a precomputed `"score"`.
    #[arg(long)]
    records: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
pub struct ScgArgs {
    /// JSON `{"alpha_t", "beta_v", "gamma_f", "fusion", "noise_sigma", "seed"}`.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    t: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    v: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t_star: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    v_star: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    v_null: f64,
    /// Leakage of the planted models.
    #[arg(long, default_value_t = 0.05)]
    noise_sigma: f32,
    #[arg(long)]
    skip_planted: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
pub struct InspectArgs {
    path: PathBuf,
}

fn resolve(flags: &CommonArgs, file: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    let from_file = match file {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(flags.to_config().over(from_file).over(RunConfig::defaults()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_ref();
    match &cli.command {
        Command::Init(a) => commands::init(a, &resolve(&a.common, file)?),
        Command::Estimate(a) => commands::estimate(a.captions.as_deref(), &resolve(&a.common, file)?),
        Command::Generate(a) => commands::generate(&a.prompt, a.image.as_deref(), &resolve(&a.common, file)?),
        Command::EvalPope(a) => commands::eval_pope(
            &commands::PopeInputs {
                annotations: a.annotations.as_deref(),
                predictions: a.predictions.as_deref(),
                questions_out: a.questions_out.as_deref(),
                predictions_out: a.predictions_out.as_deref(),
            },
            &resolve(&a.common, file)?,
        ),
        Command::EvalMmhal(a) => commands::eval_mmhal(&a.records, &resolve(&a.common, file)?),
        Command::SimulateScg(a) => commands::simulate_scg(a, &resolve(&a.common, file)?),
        Command::Inspect(a) => commands::inspect(a),
        Command::Defaults(a) => {
            let cfg = resolve(a, file)?;
            commands::emit(&cfg, None)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
