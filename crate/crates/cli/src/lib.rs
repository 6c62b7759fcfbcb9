//! Command-line pipeline: `augment` a directory of images, `analyze` the
//! resulting manifest, `cluster` the augmentations and `report` tables and
//! plots.

pub mod commands;
pub mod config;
pub mod embed;
pub mod error;
pub mod plots;
pub mod svg;
pub mod tables;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use shiftlens_core::augment::DEFAULT_IMAGE_SIZE;
use shiftlens_core::metrics::DEFAULT_PATCH_GRID;

use crate::commands::analyze::{cmd_analyze, AnalyzeOptions};
use crate::commands::augment::cmd_augment;
use crate::commands::cluster::cmd_cluster;
use crate::commands::report::{cmd_report, ReportOptions};
use crate::config::{parse_augmentations, parse_formats, RunConfig, DEFAULT_SAMPLE_ROWS};
use crate::embed::EmbedderKind;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "shiftlens",
    version,
    about = "Measure how augmentations shift image representations"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resize and augment every .jpg/.jpeg/.png under a directory.
    Augment {
        #[arg(long)]
        input_dir: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Square output size in pixels (at least 32).
        #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE)]
        size: usize,
        /// Comma-separated subset of augmentation names.
        #[arg(long)]
        augmentations: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compute metric records and statistics for a manifest.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Compute pixel and attention metrics on this many images only.
        #[arg(long)]
        metrics_subsample: Option<usize>,
        /// `manifest` reads tensors from the manifest; `synthetic` uses the
        /// built-in 8x8 thumbnail embedder.
        #[arg(long, default_value = "manifest")]
        embedder: EmbedderKind,
        #[arg(long, default_value_t = DEFAULT_PATCH_GRID)]
        grid: usize,
        /// Also store flat clusters at this distance threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Cut the augmentation dendrogram at a distance threshold.
    Cluster {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write CSV tables, radar JSON and SVG plots.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "csv,json,svg")]
        formats: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Rows in the per-sample cosine table.
        #[arg(long, default_value_t = DEFAULT_SAMPLE_ROWS)]
        samples: usize,
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Augment {
            input_dir,
            output_dir,
            seed,
            size,
            augmentations,
            workers,
        } => {
            let mut config = RunConfig::new(input_dir, output_dir, seed);
            config.image_size = size;
            config.workers = workers;
            if let Some(list) = augmentations {
                config.augmentations = parse_augmentations(&list)?;
            }
            cmd_augment(&config).map(|_| ())
        }
        Command::Analyze {
            manifest,
            out,
            metrics_subsample,
            embedder,
            grid,
            threshold,
            workers,
        } => {
            let options = AnalyzeOptions {
                embedder,
                metrics_subsample,
                grid,
                threshold,
                workers,
            };
            cmd_analyze(&manifest, &out, &options).map(|_| ())
        }
        Command::Cluster {
            report,
            threshold,
            out_dir,
        } => cmd_cluster(&report, threshold, out_dir.as_deref()).map(|_| ()),
        Command::Report {
            report,
            formats,
            out_dir,
            samples,
            threshold,
        } => {
            let options = ReportOptions {
                formats: parse_formats(&formats)?,
                sample_rows: samples,
                threshold,
            };
            cmd_report(&report, &out_dir, &options).map(|_| ())
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 on usage errors, 2 on data errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
