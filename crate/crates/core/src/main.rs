use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use claimgen::commands::{self, Command};
use claimgen::config::RunConfig;
use claimgen::Error;

#[derive(Parser)]
#[command(name = "claimgen", version, about = "Topic-conditioned claim generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config value, e.g. `--set pipeline.k_selected=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Filter claims, split topics and render training sequences.
    Prepare(Common),
    /// Fine-tune the configured backend on the prepared sequences.
    Finetune(Common),
    /// Sample texts for every topic of the configured split.
    Generate(Common),
    /// Score generated texts and keep the top k per topic.
    Rank(Common),
    /// Perplexity, prefix ranking and predicted quality/stance.
    Evaluate(Common),
    /// Aggregate crowd judgments into labels and agreement statistics.
    Aggregate(Common),
    /// Match generated texts against a corpus of existing claims.
    Novelty(Common),
    /// Render the result tables from existing artifacts.
    Report {
        #[command(flatten)]
        common: Common,
        /// Include the published baseline rows.
        #[arg(long)]
        reference: bool,
        /// Another run directory to show as a row.
        #[arg(long, value_name = "DIR")]
        compare: Vec<PathBuf>,
    },
}

fn error_report(err: &anyhow::Error) -> serde_json::Value {
    let (kind, details) = match err.downcast_ref::<Error>() {
        Some(Error::Config(v)) => ("config", v.clone()),
        Some(Error::MissingFile(p)) => ("missing_file", vec![p.display().to_string()]),
        Some(Error::MalformedRow { .. } | Error::UnknownTopic { .. }) => ("input", Vec::new()),
        Some(_) => ("runtime", Vec::new()),
        None => ("internal", Vec::new()),
    };
    serde_json::json!({
        "error": kind,
        "message": format!("{err:#}"),
        "details": details,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Prepare(c) => (Command::Prepare, c),
        Cmd::Finetune(c) => (Command::Finetune, c),
        Cmd::Generate(c) => (Command::Generate, c),
        Cmd::Rank(c) => (Command::Rank, c),
        Cmd::Evaluate(c) => (Command::Evaluate, c),
        Cmd::Aggregate(c) => (Command::Aggregate, c),
        Cmd::Novelty(c) => (Command::Novelty, c),
        Cmd::Report {
            common,
            reference,
            compare,
        } => (Command::Report { reference, compare }, common),
    };
    let result = RunConfig::load(&common.config, &common.overrides)
        .map_err(anyhow::Error::from)
        .and_then(|config| {
            commands::run(&command, &config).with_context(|| format!("{} failed", command.name()))
        });
    match result {
        Ok(manifest) => {
            for (name, digest) in &manifest.outputs {
                println!("{name}\t{}", digest.path.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_report(&err));
            match err.downcast_ref::<Error>() {
                Some(Error::Config(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
