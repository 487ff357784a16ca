//! `atr`: preprocessing, training, indexing, search and evaluation from the shell.

mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use atr_core::{Error, ErrorCategory};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "atr", version, about = "Audio-text retrieval with cross-modal embedding refinement")]
struct Cli {
    /// Print tables as CSV.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode every WAV in a directory into chunk embeddings.
    Preprocess(PreprocessArgs),
    /// Train the refinement layers.
    Train(TrainArgs),
    /// Embed one modality of a dataset with a trained checkpoint.
    Index(IndexArgs),
    /// Rank an index against a text or WAV query.
    Search(SearchArgs),
    /// Retrieval metrics on a dataset split.
    Eval(EvalArgs),
    /// Retrain over a grid of values for one hyperparameter.
    Ablate(AblateArgs),
    /// Caption-level text retrieval baselines.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoiseKind {
    White,
    Pink,
}

#[derive(Debug, Args)]
struct NoiseArgs {
    /// Mix noise at this SNR (dB) after silence removal.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long, value_enum, default_value = "white")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Directory of WAV files; clip ids follow sorted file names.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    chunk_len: f64,
    /// Silent stretches longer than this many seconds are cut.
    #[arg(long, default_value_t = 1.0)]
    silence_gap: f64,
    #[arg(long, default_value_t = 0)]
    encoder_seed: u64,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// key = value file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// A JSON-lines manifest, or `synthetic:<key=value,...>`.
    #[arg(long)]
    data: String,
    /// Best checkpoint; the final state goes to `<out>.last`, logs to `<out>.steps.csv` and `<out>.epochs.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModalityArg {
    #[value(name = "a")]
    Audio,
    #[value(name = "t")]
    Text,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: String,
    #[arg(long, value_enum)]
    modality: ModalityArg,
    #[arg(long)]
    out: PathBuf,
    /// Restrict to one split (train, val, test); all items by default.
    #[arg(long)]
    split: Option<String>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    /// Text, or a path ending in `.wav`.
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Checkpoint used to embed the query.
    #[arg(long)]
    ckpt: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Direction {
    A2t,
    T2a,
    Both,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: String,
    #[arg(long, value_enum, default_value = "both")]
    direction: Direction,
    #[arg(long, default_value = "test")]
    split: String,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Write pooling weights as `clip,chunk,weight` rows.
    #[arg(long)]
    dump_attention: Option<PathBuf>,
    /// Write per-query AP@10 as `direction,query,ap` rows.
    #[arg(long)]
    per_query: Option<PathBuf>,
    /// Per-query report of a baseline run to test against (Wilcoxon signed-rank).
    #[arg(long)]
    significance: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// loss-weights | batch-size | projection-type | loss-type | pooling
    #[arg(long)]
    axis: String,
    /// Comma-separated values; the axis default grid when omitted.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    data: String,
    /// Also write the CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Lexical,
    Bm25,
    Semantic,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// JSON lines `{"id": 1, "text": "..."}`.
    #[arg(long)]
    captions: PathBuf,
    /// JSON lines `{"id": 1, "text": "...", "relevant": [1, 4]}`; `relevant` is optional.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    /// Seed of the toy text encoder used by `semantic`.
    #[arg(long, default_value_t = 0)]
    encoder_seed: u64,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Usage => 1,
        ErrorCategory::Data => 2,
        ErrorCategory::Numeric => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let out = match cli.command {
        Command::Preprocess(a) => commands::preprocess(&a),
        Command::Train(a) => commands::train(&a),
        Command::Index(a) => commands::index(&a),
        Command::Search(a) => commands::search(&a, cli.csv),
        Command::Eval(a) => commands::eval(&a, cli.csv),
        Command::Ablate(a) => commands::ablate(&a, cli.csv),
        Command::Baseline(a) => commands::baseline(&a, cli.csv),
    };
    match out {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
