//! `camue`: synthesize data, embed text, train, evaluate, and export
//! contribution maps.
//!
//! Every failure prints one line `error[<kind>]: <reason>` on stderr and
//! exits non-zero (2 for usage errors, 1 otherwise).

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use camue::encoders::TextMode;
use camue::fusion::{FusionMode, GraphEncoderKind};

/// Relative dataset paths are resolved against this directory when set.
pub const DATA_ROOT_ENV: &str = "CAMUE_DATA_ROOT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] camue::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "camue",
    version,
    about = "Contribution-aware multimodal user embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted, tunable modality reliability.
    Synth(SynthArgs),
    /// Pool word vectors into a per-user text embedding matrix.
    EmbedText(EmbedTextArgs),
    /// Train one model and write a checkpoint.
    Train(TrainArgs),
    /// Test-set metrics of a checkpoint, optionally over several seeds.
    Eval(EvalArgs),
    /// Export per-user modality weights of a gated checkpoint.
    Contribmap(ContribmapArgs),
    /// Train and test a grid of modes over several seeds.
    Grid(GridArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Camue,
    Fixed,
    Simple,
    Link,
    Text,
}

impl From<ModeArg> for FusionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Camue => FusionMode::Camue,
            ModeArg::Fixed => FusionMode::FixedParams,
            ModeArg::Simple => FusionMode::SimpleFusion,
            ModeArg::Link => FusionMode::LinkOnly,
            ModeArg::Text => FusionMode::TextOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GraphEncoderArg {
    Rgcn,
    Mlp,
}

impl From<GraphEncoderArg> for GraphEncoderKind {
    fn from(g: GraphEncoderArg) -> Self {
        match g {
            GraphEncoderArg::Rgcn => GraphEncoderKind::Rgcn,
            GraphEncoderArg::Mlp => GraphEncoderKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TextEncoderArg {
    Pooled,
    Precomputed,
}

impl From<TextEncoderArg> for TextMode {
    fn from(t: TextEncoderArg) -> Self {
        match t {
            TextEncoderArg::Pooled => TextMode::Pooled,
            TextEncoderArg::Precomputed => TextMode::Precomputed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub relations: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
    pub rho_graph: f64,
    #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
    pub rho_text: f64,
    /// Fraction of users whose text is written from a different class.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub conflict: f64,
    /// Fraction of users that keep their label.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub label_fraction: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub mean_degree: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EmbedTextArgs {
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of users; defaults to the dataset's `meta.tsv` or the largest id + 1.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TextArgs {
    #[arg(long, value_enum, default_value_t = TextEncoderArg::Pooled)]
    pub text_encoder: TextEncoderArg,
    /// Word vectors (pooled) or embedding matrix (precomputed); defaults to
    /// `vectors.txt` or `embeddings.txt` inside the dataset.
    #[arg(long)]
    pub text_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Choose lambda per run from {0, 0.05, 0.1, 0.2} by validation accuracy.
    #[arg(long)]
    pub lambda_search: bool,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub dropout: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Camue)]
    pub mode: ModeArg,
    #[arg(long, value_enum)]
    pub graph_encoder: Option<GraphEncoderArg>,
    #[command(flatten)]
    pub text: TextArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// With more than one seed, the checkpoint's configuration is retrained
    /// for every further seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long)]
    pub text_path: Option<PathBuf>,
    /// Directory for machine-readable results.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ContribmapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `user<TAB>tag` lines; users by id or node name.
    #[arg(long)]
    pub subgroups: Option<PathBuf>,
    #[arg(long)]
    pub text_path: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ModeArg::Text, ModeArg::Link, ModeArg::Simple, ModeArg::Fixed, ModeArg::Camue])]
    pub modes: Vec<ModeArg>,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// First seed; runs use `seed .. seed + seeds`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = GraphEncoderArg::Rgcn)]
    pub graph_encoder: GraphEncoderArg,
    #[command(flatten)]
    pub text: TextArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolves a relative dataset path against `CAMUE_DATA_ROOT` when it is set.
pub fn data_path(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) if p.is_relative() && !root.is_empty() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::EmbedText(a) => commands::embed_text(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Contribmap(a) => commands::contribmap(&a),
        Command::Grid(a) => commands::grid(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let reason = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {reason}", e.kind());
            ExitCode::from(if matches!(e, CliError::Usage(_)) {
                2
            } else {
                1
            })
        }
    }
}
