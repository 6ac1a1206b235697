use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "univec", version, about = "Train and run a single bidirectional translation model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model on a tab-separated parallel corpus.
    Train(TrainArgs),
    /// Translate `--text` or each line of standard input.
    Translate(TranslateArgs),
    /// Score greedy translations of a parallel file with sentence BLEU.
    Evaluate(EvaluateArgs),
    /// Write the attention weights of one translation as CSV.
    Attention(AttentionArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lang_a: String,
    #[arg(long)]
    pub lang_b: String,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON object with training-configuration keys; flags win over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// [default: 40]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 64]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Hidden size [default: 256]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Embedding size [default: 128]
    #[arg(long)]
    pub embed: Option<usize>,
    /// [default: 1e-3]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Per-epoch learning-rate factor [default: 1.0]
    #[arg(long)]
    pub decay: Option<f64>,
    /// [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Longest sequence in ids, start and end included [default: 16]
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Keep only the first N pairs that fit in max-len.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Float width, 32 or 64 [default: 32]
    #[arg(long)]
    pub precision: Option<u32>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    /// Sentence to translate; standard input is read line by line otherwise.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long, default_value_t = 16)]
    pub max_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    A2b,
    B2a,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Parallel file with columns in the model's language order.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
    /// Highest n-gram order.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// JSON report destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Score the gold side against itself without running the model.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct AttentionArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    #[arg(long)]
    pub text: String,
    /// CSV destination.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub max_len: usize,
}
