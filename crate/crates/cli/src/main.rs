//! `sdiff`: prepare, train, recommend, evaluate and study spectral diffusion
//! recommenders from the command line.

mod commands;
mod error;
mod manifest;
mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{SweepGrid, SynthArgs, SynthKind, SynthScale};
use error::{CliError, CliResult};
use settings::{Opts, Settings};

#[derive(Debug, Parser)]
#[command(name = "sdiff", version, about = "Spectral diffusion recommender pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split the data and compute the spectral basis of the training graph.
    Prepare,
    /// Train a denoiser on a prepared run directory.
    Train,
    /// Write top-K recommendations for every user, or for those in --users.
    Recommend {
        /// File with one user ID per line.
        #[arg(long)]
        users: Option<PathBuf>,
    },
    /// Test-split Recall@K and NDCG@K of the trained model and popularity.
    Evaluate {
        /// Sampling runs (seeds `seed`, `seed + 1`, ...) to average.
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Per-frequency alpha, sigma and SNR on the time grid, as CSV.
    Snr {
        /// Basis file for the frequencies.
        #[arg(long)]
        basis: Option<PathBuf>,
        /// Evenly spaced frequencies on [0, 2] when neither --basis nor --data is given.
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
    /// Train and test each schedule variant and compare with popularity.
    Ablate {
        /// Training seeds per variant.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Grid over (alpha-min, sigma-max) or over the basis rank.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        alpha_mins: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        sigma_maxs: Vec<f64>,
        /// Basis ranks; selects the rank sweep.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["alpha_mins", "sigma_maxs"])]
        ranks: Vec<usize>,
    },
    /// Generate a synthetic interaction file.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::TwoBlock)]
        kind: SynthKind,
        /// Size preset of the genre and latent generators.
        #[arg(long, value_enum, default_value_t = SynthScale::Ml100k)]
        scale: SynthScale,
        /// Users of the two-block generator.
        #[arg(long, default_value_t = 200)]
        users: usize,
        /// Items of the two-block generator.
        #[arg(long, default_value_t = 60)]
        items: usize,
        /// Minimum interactions per two-block user.
        #[arg(long, default_value_t = 25)]
        base: usize,
    },
}

/// Settings of earlier stages this command inherits.
fn inherited(cmd: &Command, opts: &Opts) -> CliResult<BTreeMap<String, String>> {
    let dir = || opts.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    match cmd {
        Command::Train => commands::prepared_config(&dir()),
        Command::Recommend { .. } | Command::Evaluate { .. } => commands::trained_config(&dir()),
        _ => Ok(BTreeMap::new()),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let base = inherited(&cli.command, &cli.opts)?;
    let s = Settings::resolve(&cli.opts, base)?;
    match &cli.command {
        Command::Prepare => commands::prepare(&s),
        Command::Train => commands::train(&s),
        Command::Recommend { users } => commands::recommend(&s, users.as_deref()),
        Command::Evaluate { runs } => commands::evaluate(&s, *runs),
        Command::Snr { basis, points } => commands::snr(&s, basis.as_deref(), *points),
        Command::Ablate { seeds } => commands::ablate(&s, *seeds),
        Command::Sweep {
            alpha_mins,
            sigma_maxs,
            ranks,
        } => {
            let grid = if ranks.is_empty() {
                SweepGrid::Schedule {
                    alpha_mins: alpha_mins.clone(),
                    sigma_maxs: sigma_maxs.clone(),
                }
            } else {
                SweepGrid::Rank { ranks: ranks.clone() }
            };
            commands::sweep(&s, &grid)
        }
        Command::Synth {
            kind,
            scale,
            users,
            items,
            base,
        } => commands::synth(
            &s,
            &SynthArgs {
                kind: *kind,
                scale: *scale,
                users: *users,
                items: *items,
                base: *base,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
