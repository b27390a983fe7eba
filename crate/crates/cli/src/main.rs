use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "leafvit", version, about = "Lightweight ViT inference for mango leaf disease images")]
struct Cli {
    /// Emit machine-readable JSON on stdout
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify one or more images
    Classify(ClassifyArgs),
    /// Evaluate a directory with one subdirectory per class
    Evaluate(EvaluateArgs),
    /// Parameter, size and FLOP accounting for a model graph
    Profile(ProfileArgs),
    /// Deterministic stratified k-fold split plan
    Split(SplitArgs),
    /// Write augmented variants of an image
    PreviewAugment(PreviewArgs),
    /// Attention-rollout saliency map for an image
    Explain(ExplainArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InferenceArgs {
    /// MLVW weight file
    #[arg(long, short)]
    pub weights: PathBuf,

    /// Number of augmented variants to average (0 = single plain pass)
    #[arg(long, default_value_t = 0)]
    pub tta: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Print wall-clock latency per image
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(required = true)]
    pub images: Vec<PathBuf>,

    #[command(flatten)]
    pub inference: InferenceArgs,

    #[arg(long, default_value_t = 3)]
    pub topk: usize,

    /// Also write plain-pass `{"labels", "logits"}` JSON per image into this directory
    #[arg(long)]
    pub logits_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    pub dataset: PathBuf,

    #[command(flatten)]
    pub inference: InferenceArgs,

    /// Directory for cm.csv, report.csv and report.txt
    #[arg(long, default_value = "eval_out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    /// mobilevit_s, efficientvit_b0, tinyvit_5m or all
    #[arg(long, default_value = "mobilevit_s")]
    pub model: String,

    #[arg(long, default_value_t = 8)]
    pub classes: usize,

    #[arg(long, default_value_t = 224)]
    pub input_hw: usize,

    /// Per-layer table as CSV instead of aligned text
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Per-class counts: `500,500,480` or `500x8`
    #[arg(long)]
    pub counts: String,

    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write the full plan as JSON to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PreviewArgs {
    pub image: PathBuf,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, short, default_value_t = 3)]
    pub n: usize,

    #[arg(long, default_value = "augment_preview")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    pub image: PathBuf,

    #[arg(long, short)]
    pub weights: PathBuf,

    /// MobileViT block to explain: `last` or an index from 0
    #[arg(long, default_value = "last")]
    pub stage: String,

    #[arg(long, default_value = "explain_out")]
    pub out: PathBuf,
}

fn configure_threads() {
    let Ok(v) = std::env::var("LEAFVIT_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the worker pool: {e}");
            }
        }
        _ => log::warn!("ignoring LEAFVIT_THREADS={v:?}; expected a positive integer"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Classify(a) => commands::classify(&a, cli.json),
        Command::Evaluate(a) => commands::evaluate(&a, cli.json),
        Command::Profile(a) => commands::profile(&a, cli.json),
        Command::Split(a) => commands::split(&a, cli.json),
        Command::PreviewAugment(a) => commands::preview(&a, cli.json),
        Command::Explain(a) => commands::explain(&a, cli.json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json {
                println!("{}", serde_json::json!({ "error": e.to_string(), "exit_code": e.exit_code() }));
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
