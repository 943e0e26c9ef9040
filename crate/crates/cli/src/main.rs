//! `decode`: synthesize, prepare, train, evaluate, explain and serve
//! questionnaire screening models.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 training error.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvaluateArgs, ExplainArgs, PrepArgs, ServeArgs, SynthArgs, TrainGbdtArgs, TrainLogregArgs};

#[derive(Debug, Parser)]
#[command(name = "decode", version, about = "Questionnaire screening toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort CSV.
    Synth(SynthArgs),
    /// Keep symptomatic records, prune the high-missingness block, impute contact.
    Prep(PrepArgs),
    /// Train the logistic screening model.
    TrainLogreg(TrainLogregArgs),
    /// Train the gradient-boosted screening model.
    TrainGbdt(TrainGbdtArgs),
    /// Confusion matrix and metrics of a model on a cohort, or of a given outcome.
    Evaluate(EvaluateArgs),
    /// Fit a surrogate tree to a model's decisions and extract its rules.
    Explain(ExplainArgs),
    /// Start the assessment HTTP service.
    Serve(ServeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Prep(a) => commands::prep(a),
        Command::TrainLogreg(a) => commands::train_logreg(a),
        Command::TrainGbdt(a) => commands::train_gbdt(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Explain(a) => commands::explain(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("decode: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
