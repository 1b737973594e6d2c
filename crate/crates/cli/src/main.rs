mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "litset", version, about = "Few-shot NER: label interpretation corpora, training and evaluation")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration value, e.g. `--set lit.learning_rate=1e-6`.
    /// The value is parsed as JSON when possible. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info", env = "LITSET_LOG")]
    log_level: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Annotate entity-linked sentences with sampled knowledge-base types.
    BuildLitset(commands::BuildLitset),
    /// Print corpus statistics as JSON.
    Stats(commands::Stats),
    /// Split labels into a label-interpretation side and a few-shot side.
    Split(commands::Split),
    /// Label interpretation training.
    TrainLit(commands::TrainLit),
    /// Few-shot fine-tuning on a sampled k-shot support set.
    Finetune(commands::Finetune),
    /// Span micro-F1 of a checkpoint on a corpus.
    Evaluate(commands::Evaluate),
    /// Label count × verbalization scheme sweep.
    Grid(commands::Grid),
    /// Render results JSONL as CSV, JSON or Markdown.
    Report(commands::Report),
    /// Generate the templated toy corpus.
    ToyCorpus(commands::ToyCorpus),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.common.log_level).init();

    let result = match cli.command {
        Command::BuildLitset(a) => commands::build_litset(&cli.common, a),
        Command::Stats(a) => commands::stats(&cli.common, a),
        Command::Split(a) => commands::split(&cli.common, a),
        Command::TrainLit(a) => commands::train_lit(&cli.common, a),
        Command::Finetune(a) => commands::finetune(&cli.common, a),
        Command::Evaluate(a) => commands::evaluate(&cli.common, a),
        Command::Grid(a) => commands::grid(&cli.common, a),
        Command::Report(a) => commands::report(&cli.common, a),
        Command::ToyCorpus(a) => commands::toy_corpus(&cli.common, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
