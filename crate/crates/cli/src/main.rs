//! `protex`: extraction, evaluation and review runs from one JSON config.

mod commands;
mod config;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use protex_core::pipeline::Approach;

use crate::commands::Phase;
use crate::config::{Backend, Overrides, RunConfig};
use crate::workspace::Exit;

#[derive(Debug, Parser)]
#[command(name = "protex", version, about = "Protocol-prompted LLM data extraction and evaluation")]
struct Cli {
    /// Run configuration (JSON). Relative paths inside it resolve against
    /// its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Redo work even when its outputs exist.
    #[arg(long, global = true)]
    force: bool,
    /// Gateway backend; overrides the config.
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Extraction approach; overrides the config.
    #[arg(long, global = true)]
    approach: Option<Approach>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract every corpus source with the LLM.
    Extract,
    /// Compare LLM records against the human baseline.
    Evaluate,
    /// Ask the LLM to review the baseline extraction in batches.
    Review {
        #[arg(long, value_enum, default_value = "all")]
        phase: Phase,
    },
    /// Write a copy of the baseline with deliberate errors.
    Inject,
    /// Tabulate value-add and detection from review feedback.
    Score,
    /// Render the result tables.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides { seed: cli.seed, out: cli.out, backend: cli.backend, approach: cli.approach };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    tracing::debug!(?cfg, "configuration");
    match cli.command {
        Command::Extract => commands::extract(&cfg, cli.force),
        Command::Evaluate => commands::evaluate(&cfg, cli.force),
        Command::Review { phase } => commands::review(&cfg, phase, cli.force),
        Command::Inject => commands::inject(&cfg, cli.force),
        Command::Score => commands::score(&cfg, cli.force),
        Command::Report => commands::report(&cfg, cli.force),
    }
}

/// The error chain joined by ": ", skipping causes the previous message
/// already ends with.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("PROTEX_LOG").unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .without_time()
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Exit>().map_or(1, |x| x.code);
            eprintln!("error: {}", describe(&e));
            ExitCode::from(code)
        }
    }
}
