//! `fvret`: batch front end for the retrieval engine.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{KeyFlags, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "fvret", version, about = "Global-descriptor image retrieval experiments")]
struct Cli {
    /// key=value configuration file; flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    keys: KeyFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dense SIFT for every image in `images`, one file per image in `descriptors`.
    Extract,
    /// PCA and GMM from the local descriptors in `descriptors`.
    Train,
    /// Fisher Vectors for `descriptors` (or `images`) into `global`.
    Encode,
    /// Pooled index over a transform grid into `index`.
    Index,
    /// Rank the manifest queries and score them.
    Evaluate,
    /// Score queries under rotations or downscales (`kind`).
    Sweep,
    /// Fuse two descriptor families over alpha = 0, 0.1, ..., 1.
    Fuse,
    /// Validate an external descriptor file and copy it to `out`.
    Import { input: PathBuf },
    /// Print file headers.
    Info {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.keys)?;
    if let Some(threads) = cfg.parsed::<usize>("threads")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot start worker pool")?;
    }
    match cli.command {
        Command::Extract => commands::extract(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Encode => commands::encode(&cfg),
        Command::Index => commands::index(&cfg),
        Command::Evaluate => commands::evaluate_cmd(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Fuse => commands::fuse(&cfg),
        Command::Import { input } => commands::import(&input, &cfg),
        Command::Info { files } => files.iter().try_for_each(|f| commands::info(f)),
    }
}
