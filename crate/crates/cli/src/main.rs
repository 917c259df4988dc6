//! `cpcfg` command-line interface.

mod commands;
mod failure;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpcfg::eval::{Baseline, EvalMode};
use cpcfg::grammar::ModelKind;

#[derive(Parser)]
#[command(name = "cpcfg", version, about = "Unsupervised constituency parsing with (compound) PCFGs")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strip punctuation, lowercase and build the vocabulary.
    Preprocess(PreprocessArgs),
    /// Train a model on bracketed treebank files.
    Train(TrainArgs),
    /// Parse whitespace-tokenized sentences, one per line.
    Parse(ParseArgs),
    /// Score predicted trees against gold trees.
    Eval(EvalArgs),
    /// Perplexity of a corpus (importance weighted for compound models).
    Perplexity(PerplexityArgs),
    /// Nearest neighbors between posterior means.
    Neighbors(NeighborsArgs),
    /// Top principal component of posterior means attached to a subtree shape.
    Pca(PcaArgs),
    /// Write the posterior mean of every sentence.
    ExportMeans(ExportMeansArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Training treebank; the vocabulary comes from this split.
    #[arg(long)]
    train: PathBuf,
    /// Further splits as NAME=PATH.
    #[arg(long = "split", value_parser = parse_split)]
    splits: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = 10_000)]
    vocab_cap: usize,
    /// Whitespace-separated POS tags to remove.
    #[arg(long)]
    punct_tags: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    punct_tags: Option<String>,
    /// Checkpoint path (default: OUT/model.ckpt).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory for the checkpoint, log, config and manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted trees, one per line, aligned with the gold trees.
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, default_value = "sentence", value_parser = parse_mode)]
    eval_mode: EvalMode,
    /// Add a baseline row (left, right or random); repeatable.
    #[arg(long = "baseline", value_parser = parse_baseline)]
    baselines: Vec<Baseline>,
    /// Add a row scoring right-binarized gold trees.
    #[arg(long)]
    oracle: bool,
    /// Leave sentences without non-trivial spans out of sentence-level F1
    /// instead of scoring them 100.
    #[arg(long)]
    skip_vacuous: bool,
    /// Seed for the random baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    punct_tags: Option<String>,
    /// Tab-separated report (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value report.
    #[arg(long)]
    kv: Option<PathBuf>,
    /// Nonterminal/label alignment table as CSV.
    #[arg(long)]
    alignment: Option<PathBuf>,
    /// Whitespace-separated gold labels for the alignment columns.
    #[arg(long, default_value = "NP VP PP SBAR ADJP ADVP")]
    labels: String,
}

#[derive(Args)]
struct PerplexityArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    iw_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct NeighborsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Query sentence indices (0-based), comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    query: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Unlexicalized subtree, e.g. "(NT-04 (T-13) (NT-12 (T-01) (T-02)))".
    #[arg(long)]
    pattern: String,
    #[arg(long, default_value_t = 5)]
    top_m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportMeansArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_split(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), path.into())),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    s.parse().map_err(|e: cpcfg::Error| e.to_string())
}

fn parse_baseline(s: &str) -> Result<Baseline, String> {
    s.parse().map_err(|e: cpcfg::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let command_line: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Train(a) => commands::train(a, &command_line),
        Command::Parse(a) => commands::parse(a),
        Command::Eval(a) => commands::eval(a),
        Command::Perplexity(a) => commands::perplexity(a),
        Command::Neighbors(a) => commands::neighbors(a),
        Command::Pca(a) => commands::pca(a),
        Command::ExportMeans(a) => commands::export_means(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
