//! `sagda`: train, evaluate and inspect spectral-augmented graph domain adaptation.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numeric failure.

mod commands;
mod config;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(sagda_core::Error),
    /// Training stopped on a non-finite loss.
    Diverged(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_numeric() => 2,
            Failure::Core(_) => 1,
            Failure::Diverged(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Diverged(m) => write!(f, "training diverged: {m}"),
        }
    }
}

impl From<sagda_core::Error> for Failure {
    fn from(e: sagda_core::Error) -> Self {
        Failure::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "sagda", version, about = "Unsupervised graph domain adaptation for node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// File of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for --set seed=N.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on a source/target pair; writes metrics.jsonl, model.json and summary.json.
    Train {
        /// pair.json manifest.
        #[arg(long)]
        pair: PathBuf,
        /// Also write source and target embeddings as CSV.
        #[arg(long)]
        dump_embeddings: bool,
        /// Directory for cached eigendecompositions and PPMI matrices [default: OUT/cache].
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a saved model on the target graph of a pair.
    Eval {
        #[arg(long)]
        pair: PathBuf,
        /// model.json written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Per-class spectral signatures and their cross-domain correlation.
    Spectra {
        #[arg(long)]
        pair: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check the spectral layer's stability bound on random small graphs.
    VerifyLemma {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic source/target pair of block-model graphs.
    GenSynth {
        #[command(flatten)]
        common: Common,
    },
    /// Train the full model and the five ablated variants.
    Ablate {
        #[arg(long)]
        pair: PathBuf,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run a command from its resolved-config.json.
    Rerun {
        /// resolved-config.json of an earlier run.
        resolved: PathBuf,
        /// Write outputs here instead of the recorded directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn cli_command() -> clap::Command {
    let keys = config::keys_help();
    let mut cmd = Cli::command().after_help(keys.clone());
    for name in ["train", "eval", "spectra", "verify-lemma", "gen-synth", "ablate"] {
        cmd = cmd.mut_subcommand(name, |s| s.after_help(keys.clone()));
    }
    cmd
}

fn run(argv: Vec<String>) -> Result<(), Failure> {
    let matches = match cli_command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            let text = e.render().to_string();
            let text = text.trim_end();
            return Err(Failure::Usage(text.strip_prefix("error: ").unwrap_or(text).to_string()));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::Usage(e.to_string()))?;
    let inv = match cli.command {
        Command::Train {
            pair,
            dump_embeddings,
            cache_dir,
            common,
        } => commands::Invocation::new(commands::Kind::Train, &common)?
            .with_pair(pair)
            .with_cache(cache_dir)
            .with_dump(dump_embeddings),
        Command::Eval { pair, model, common } => commands::Invocation::new(commands::Kind::Eval, &common)?
            .with_pair(pair)
            .with_model(model),
        Command::Spectra { pair, common } => commands::Invocation::new(commands::Kind::Spectra, &common)?.with_pair(pair),
        Command::VerifyLemma { common } => commands::Invocation::new(commands::Kind::VerifyLemma, &common)?,
        Command::GenSynth { common } => commands::Invocation::new(commands::Kind::GenSynth, &common)?,
        Command::Ablate { pair, cache_dir, common } => commands::Invocation::new(commands::Kind::Ablate, &common)?
            .with_pair(pair)
            .with_cache(cache_dir),
        Command::Rerun { resolved, out } => commands::Invocation::from_resolved(&resolved, out)?,
    };
    inv.execute()
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
