//! `voxnet`: phantom generation, cross-validated training, prediction and
//! the statistical comparisons, from one executable.
//!
//! Exit status: 0 success, 2 usage or configuration error, 3 runtime or
//! numeric failure.

mod commands;
mod config;
mod error;
mod io;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "voxnet", version, about = "Two-channel volumetric CNN classifier and evaluation tools")]
struct Cli {
    /// Worker threads; 1 runs everything on the calling thread. Defaults to
    /// the number of available cores.
    #[arg(long, global = true, env = "VOXNET_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic two-channel dataset and its manifest.
    Phantom {
        /// TOML phantom specification.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the specification.
        #[arg(long)]
        seed: Option<u64>,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Cross-validate a network on a labeled manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Score a manifest with a trained checkpoint, output nodes read as
    /// converter / nonconverter.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Statistical comparisons over score and prediction CSVs.
    #[command(subcommand)]
    Stats(StatsCommand),
}

#[derive(Debug, Subcommand)]
enum StatsCommand {
    /// DeLong comparison of two ROC curves on the same subjects.
    RocCompare {
        #[arg(long)]
        scores_a: PathBuf,
        #[arg(long)]
        scores_b: PathBuf,
        /// Score column; defaults to `score`, then `convscore`.
        #[arg(long)]
        column: Option<String>,
        /// Treat lower scores in file A as more positive.
        #[arg(long)]
        negate_a: bool,
        /// Treat lower scores in file B as more positive.
        #[arg(long)]
        negate_b: bool,
        /// ROC overlay output.
        #[arg(long, default_value = "roc_compare.svg")]
        svg: PathBuf,
    },
    /// McNemar test on two classifiers' per-subject correctness.
    Mcnemar {
        #[arg(long)]
        pred_a: PathBuf,
        #[arg(long)]
        pred_b: PathBuf,
    },
    /// Pearson correlation of scores with longitudinal cognitive change.
    Correlate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Cognitive measure, e.g. cdr_sb, adas, faq, mmse.
        #[arg(long)]
        measure: String,
        /// Months after baseline: 12 or 36.
        #[arg(long)]
        horizon: u32,
        /// Score column; defaults to `score`, then `convscore`.
        #[arg(long)]
        column: Option<String>,
        /// Directory for the scatter CSV and SVG.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn init_threads(threads: Option<usize>) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    match threads {
        Some(0) => return Err(CliError::usage("--threads must be at least 1")),
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    builder
        .build_global()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Phantom { spec, out, seed, force } => {
            init_threads(cli.threads)?;
            commands::phantom::run(&spec, &out, seed, force)
        }
        Command::Train {
            manifest,
            config,
            out,
            epochs,
            folds,
            seed,
            force,
        } => {
            let run_config = RunConfig::load(&config)?;
            let threads = cli.threads.or(run_config.deterministic.then_some(1));
            init_threads(threads)?;
            let overrides = commands::train::Overrides {
                out,
                epochs,
                folds,
                seed,
            };
            commands::train::run(&manifest, &run_config, &overrides, force)
        }
        Command::Predict {
            checkpoint,
            manifest,
            out,
        } => {
            init_threads(cli.threads)?;
            commands::predict::run(&checkpoint, &manifest, &out)
        }
        Command::Stats(cmd) => {
            init_threads(cli.threads)?;
            match cmd {
                StatsCommand::RocCompare {
                    scores_a,
                    scores_b,
                    column,
                    negate_a,
                    negate_b,
                    svg,
                } => commands::stats::roc_compare(&scores_a, &scores_b, column.as_deref(), [negate_a, negate_b], &svg),
                StatsCommand::Mcnemar { pred_a, pred_b } => commands::stats::mcnemar(&pred_a, &pred_b),
                StatsCommand::Correlate {
                    scores,
                    manifest,
                    measure,
                    horizon,
                    column,
                    out,
                } => commands::stats::correlate(&scores, &manifest, &measure, horizon, column.as_deref(), &out),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
