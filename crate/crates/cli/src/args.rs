//! Command-line surface. Every option is optional at parse time so a config
//! file can supply it; required values are checked after merging. Config
//! tables are checked for unknown keys in [`crate::config`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use psdetect::dataset::TokenMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "psdetect",
    version,
    about = "PowerShell AST pipelines and LSTM/BiLSTM script classifiers"
)]
pub struct Cli {
    /// TOML file with one table per subcommand; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus and its manifest.
    Gen(GenArgs),
    /// Parse the scripts of a manifest into a JSONL pipeline file.
    Pipeline(PipelineArgs),
    /// Build a capped vocabulary.
    Vocab(VocabArgs),
    /// Per-script and per-label size, line and entropy statistics.
    Stats(StatsArgs),
    /// Train on a stratified split and score the test part.
    Train(TrainArgs),
    /// Score a trained model on a corpus.
    Eval(EvalArgs),
    /// Stratified K-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Collect eval and crossval summaries into one comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Bilstm,
}

impl ModelKind {
    pub fn display_name(self, mode: TokenMode) -> String {
        let arch = match self {
            ModelKind::Lstm => "LSTM",
            ModelKind::Bilstm => "BiLSTM",
        };
        match mode {
            TokenMode::Ast => arch.to_string(),
            TokenMode::Raw => format!("Non-AST {arch}"),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub benign: Option<usize>,
    #[arg(long)]
    pub malicious: Option<usize>,
    /// Probability in [0, 1] that a malicious script carries an encoded blob.
    #[arg(long)]
    pub obfuscation: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineArgs {
    /// Manifest CSV, or a directory holding `manifest.csv`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Further manifests merged in; scripts with already-seen text are dropped.
    #[arg(long = "merge")]
    pub merge: Vec<PathBuf>,
    /// Output JSONL file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Where documents come from.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct InputArgs {
    /// JSONL pipeline file (AST mode only).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Manifest CSV or corpus directory.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<TokenMode>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabOptions {
    /// Maximum number of ranked tokens.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Newline-separated stoplist replacing the shipped one.
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
    /// Disable the stoplist.
    #[arg(long)]
    pub no_stoplist: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub vocab: VocabOptions,
    /// Output vocabulary file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub dense_dim: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub min_delta: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Stop once training accuracy reaches this value.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    /// Required: every run is seeded.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelOptions,
    #[command(flatten)]
    #[serde(flatten)]
    pub vocab: VocabOptions,
    /// Prebuilt vocabulary; otherwise one is built on the training split.
    #[arg(long = "vocab")]
    pub vocab_file: Option<PathBuf>,
    /// Downsample the majority label before splitting.
    #[arg(long)]
    pub balance: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Probability at or above which a script counts as malicious.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelOptions,
    #[command(flatten)]
    #[serde(flatten)]
    pub vocab: VocabOptions,
    /// Prebuilt vocabulary; otherwise one is built over the whole corpus.
    #[arg(long = "vocab")]
    pub vocab_file: Option<PathBuf>,
    /// Build each fold's vocabulary from its training scripts only.
    #[arg(long)]
    pub fold_vocab: bool,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Fraction of each fold's training part held out for early stopping.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportArgs {
    /// Output directories of `eval` or `crossval` runs, in table order.
    #[arg(long = "run", num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// Output CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
