mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spaner::eval::MatchMode;
use spaner::{ErrorKind, Result, SpanerError};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "spaner", version, about = "Shared-prompt multimodal alignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Match {
    Class,
    Instance,
}

impl From<Match> for MatchMode {
    fn from(m: Match) -> Self {
        match m {
            Match::Class => MatchMode::Class,
            Match::Instance => MatchMode::Instance,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic paired embeddings, one file per modality.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the two configured modalities jointly.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path; the history CSV is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Add a modality to a trained checkpoint with everything else frozen.
    Extend {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-k cross-modal retrieval accuracy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long = "match", value_enum, default_value = "class")]
        match_mode: Match,
    },
    /// Class-wise top-1 confusion matrix and its most frequent errors.
    Confusion {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        top_n: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Joint 2-D PCA projection of pooled embeddings.
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Embedding files to project together.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    GradCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn resolved(config: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    RunConfig::load(config)?.resolve(seed)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, seed, out } => {
            commands::gen_data(&resolved(config.as_deref(), seed)?, &out)
        }
        Command::Train { config, seed, data, out } => {
            commands::train(&resolved(config.as_deref(), seed)?, &data, &out)
        }
        Command::Extend { config, seed, checkpoint, data, out } => {
            commands::extend_checkpoint(&resolved(config.as_deref(), seed)?, &checkpoint, &data, &out)
        }
        Command::Eval { checkpoint, query, gallery, k, out, workers, match_mode } => {
            commands::eval(&checkpoint, &query, &gallery, k, &out, workers, match_mode.into())
        }
        Command::Confusion { checkpoint, query, gallery, out, top_n, workers } => {
            commands::confusion(&checkpoint, &query, &gallery, &out, top_n, workers)
        }
        Command::Project { checkpoint, data, out } => commands::project(&checkpoint, &data, &out),
        Command::GradCheck { config, seed } => {
            commands::grad_check_run(&resolved(config.as_deref(), seed)?).map(|_| ())
        }
    }
}

fn exit_code(e: &SpanerError) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
