//! `polindex` command-line pipeline.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error. Failures print one JSON object on stderr.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polindex::Error;

#[derive(Debug, Parser)]
#[command(name = "polindex", version, about = "Partisan polarization pipeline over tweet embeddings")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for slice computation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate tweets/users JSONL and write clean copies plus rejects.
    Ingest(commands::IngestArgs),
    /// Tag tweets with topics; writes a labels sidecar and daily volumes.
    Tag(commands::TagArgs),
    /// Resolve user locations to regions.
    Geo(commands::GeoArgs),
    /// Label party families from profiles, optionally train and predict.
    Party(commands::PartyArgs),
    /// Polarization of one cohort or a series of slices.
    Poli(commands::PoliArgs),
    /// Rank regions by mean weekly polarization.
    Rank(commands::RankArgs),
    /// Combine per-topic series into one daily series.
    Aggregate(commands::AggregateArgs),
    /// Pearson correlation of a series or ranking with an external CSV.
    Correlate(commands::CorrelateArgs),
    /// Event-triggered average of a daily series.
    Events(commands::EventsArgs),
    /// Percentage of conspiracy tweets per region or family.
    Conspiracy(commands::ConspiracyArgs),
    /// Write the synthetic fixture corpus.
    Synth(commands::SynthArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Internal(_) => 3,
        _ => 2,
    }
}

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    let body = serde_json::json!({"error": {"kind": kind, "message": message, "exit_code": code}});
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report("usage", e.render().to_string().trim(), 1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            report(e.kind(), &e.to_string(), code)
        }
    }
}
