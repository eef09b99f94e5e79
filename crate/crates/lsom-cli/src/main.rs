//! `lsom` — train, evaluate, and inspect layered self-organizing maps on
//! MNIST-format digit data.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvalArgs, ExportMapsArgs, GenerateArgs, SweepArgs, TrainArgs};

#[derive(Parser)]
#[command(
    name = "lsom",
    version,
    about = "Layered self-organizing maps for digit images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run config; writes model.lsom and appends a row
    /// to results.csv in the output directory.
    Train {
        /// Run config file (see configs/ for examples).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's out_dir, then `runs`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory holding the MNIST IDX files (default: config, then
        /// $LSOM_DATASET_DIR, then `data`).
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's training image count.
        #[arg(long)]
        images: Option<usize>,
        /// Override the config's iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Print train/validation accuracy of a stored model on freshly drawn
    /// subsets (same seed and counts reproduce the training report).
    Eval {
        /// Model archive written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
        /// Training-subset size to evaluate on.
        #[arg(long, default_value_t = 1000)]
        images: usize,
        /// Validation-subset size (default: same as --images).
        #[arg(long)]
        validate_images: Option<usize>,
        /// Subset seed (default: the seed stored in the model).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a generated digit image (PGM) per top-grid node, plus
    /// class_map.csv.
    Generate {
        #[arg(long)]
        model: PathBuf,
        /// Output directory for the images.
        #[arg(long)]
        out: PathBuf,
        /// Node to generate as `row,col`; repeat for several. Default: every
        /// node in the top grid.
        #[arg(long = "node", value_name = "ROW,COL")]
        nodes: Vec<String>,
    },
    /// Write one exemplar montage per layer: gray PGM for the pixel layer,
    /// red/blue PPM for coordinate layers.
    ExportMaps {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every iterations × images × architecture combination in a sweep
    /// config, appending one results.csv row per run (failures become
    /// `error:` rows and the sweep continues).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
        /// Override the config's seed for every run.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            dataset_dir,
            seed,
            images,
            iterations,
        } => commands::cmd_train(TrainArgs {
            config,
            out,
            dataset_dir,
            seed,
            images,
            iterations,
        }),
        Command::Eval {
            model,
            dataset_dir,
            images,
            validate_images,
            seed,
        } => commands::cmd_eval(EvalArgs {
            model,
            dataset_dir,
            images,
            validate_images,
            seed,
        }),
        Command::Generate { model, out, nodes } => {
            commands::cmd_generate(GenerateArgs { model, out, nodes })
        }
        Command::ExportMaps { model, out } => {
            commands::cmd_export_maps(ExportMapsArgs { model, out })
        }
        Command::Sweep {
            config,
            out,
            dataset_dir,
            seed,
        } => commands::cmd_sweep(SweepArgs {
            config,
            out,
            dataset_dir,
            seed,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
