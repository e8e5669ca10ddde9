//! `entail`: train, evaluate and inspect sentence-encoding entailment models.

mod commands;
mod heatmap;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use entail_core::InputStrategy;

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "entail", version, about = "biLSTM sentence-encoding models for textual entailment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write a checkpoint plus a per-epoch metric log.
    Train(TrainArgs),
    /// Report accuracy and the confusion matrix of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Write one prediction record per example.
    Predict(PredictArgs),
    /// Render the inner-attention weights of one sentence pair.
    Attend(AttendArgs),
    /// Print parameter counts for a model configuration.
    Params(ParamsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F64,
    F32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Tokens {
    /// Lowercase and split the raw sentence text.
    Raw,
    /// Use the `sentence{1,2}_binary_parse` fields.
    BinaryParse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalFormat {
    Text,
    JsonLines,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttendFormat {
    Text,
    Html,
}

fn parse_strategy(s: &str) -> Result<InputStrategy, String> {
    s.parse().map_err(|e: entail_core::Error| e.to_string())
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    /// Training data (SNLI JSON lines).
    #[arg(long)]
    pub train: PathBuf,
    /// Development data, used for model selection.
    #[arg(long)]
    pub dev: PathBuf,
    /// Pretrained vectors (`token v1 ... vn` per line). Without it all rows are random.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Embedding width; read from the vector file when one is given.
    #[arg(long, default_value_t = 300)]
    pub embedding_dim: usize,
    /// Output directory for checkpoints and the metric log.
    #[arg(long)]
    pub out: PathBuf,
    /// original, invert-premises, double-premises, double-hypothesis or differentiate.
    #[arg(long, default_value = "original", value_parser = parse_strategy)]
    pub strategy: InputStrategy,
    /// LSTM hidden size per direction.
    #[arg(long, default_value_t = 300)]
    pub hidden: usize,
    /// Width of the tanh projection before the classifier.
    #[arg(long, default_value_t = 300)]
    pub projection: usize,
    #[arg(long, value_enum, default_value = "on")]
    pub attention: Switch,
    #[arg(long, default_value_t = 2016)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// RMSprop learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.25)]
    pub dropout: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, value_enum, default_value = "raw")]
    pub tokens: Tokens,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: Precision,
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: EvalFormat,
    #[arg(long, value_enum, default_value = "raw")]
    pub tokens: Tokens,
}

#[derive(clap::Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "raw")]
    pub tokens: Tokens,
}

#[derive(clap::Args, Debug)]
pub struct AttendArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub premise: String,
    #[arg(long)]
    pub hypothesis: String,
    #[arg(long, value_enum, default_value = "text")]
    pub format: AttendFormat,
}

#[derive(clap::Args, Debug)]
pub struct ParamsArgs {
    #[arg(long, default_value_t = 300)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 300)]
    pub hidden: usize,
    #[arg(long, default_value_t = 300)]
    pub projection: usize,
    #[arg(long, value_enum, default_value = "on")]
    pub attention: Switch,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Attend(a) => commands::attend(&a),
        Command::Params(a) => commands::params(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
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
