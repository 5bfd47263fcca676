//! `comprag` command-line tool.
//!
//! Exit codes: 0 success, 1 chunk relevance violations, 2 bad input or
//! missing files, 3 remote embedder/generator failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use comprag_core::evaluator::{EvaluatorMode, MissingPolicy};

#[derive(Debug, Parser)]
#[command(name = "comprag", version, about = "Semantic retrieval checked against a deterministic ranking")]
struct Cli {
    /// Configuration file (default: ./comprag.toml when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Index file, overriding paths.index.
    #[arg(long, global = true)]
    index: Option<PathBuf>,

    /// Filtration list file, overriding paths.filtration.
    #[arg(long, global = true)]
    filtration: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk an object-record JSONL file and write the index.
    Ingest {
        records: PathBuf,
        /// Write the index even if some chunks violate chunk-property relevance; offending chunks are skipped.
        #[arg(long)]
        allow_violations: bool,
    },
    /// Score a metrics CSV and write the filtration list.
    Score { metrics: PathBuf },
    /// Answer a query from the index and filtration list.
    Query(QueryArgs),
    /// Dump the correlation map between index hashes and the filtration list.
    Inspect,
}

#[derive(Debug, Args)]
struct QueryArgs {
    text: String,
    /// Retrieval depth.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mode: Option<EvaluatorMode>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Filter-mode rank cutoff.
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    missing: Option<MissingPolicy>,
    /// Print the full answer bundle as JSON.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
