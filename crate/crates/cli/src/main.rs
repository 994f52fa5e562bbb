//! `ssc`: command-line front end for the scene completion core.

mod commands;
mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "ssc", version, about = "Semantic scene completion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a depth map into a TSDF (or flipped TSDF) voxel grid.
    Encode(EncodeArgs),
    /// Compute the local geometric anisotropy of a label grid.
    Lga(LgaArgs),
    /// Turn an LGA grid into a per-voxel importance grid.
    Weights(WeightsArgs),
    /// Report the distribution of LGA values.
    Stats(StatsArgs),
    /// Evaluate the loss family on a score volume.
    Loss(LossArgs),
    /// Score a predicted label grid against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// Depth raster (DPM1).
    depth: PathBuf,
    /// Camera text file.
    camera: PathBuf,
    /// Output grid (VXG1, f32).
    out: PathBuf,
    #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"], default_values_t = [240usize, 144, 240])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 0.02)]
    voxel_size: f64,
    /// World position of the grid's minimum corner.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], default_values_t = [0.0f64, 0.0, 0.0], allow_negative_numbers = true)]
    origin: Vec<f64>,
    #[arg(long, default_value_t = 0.24)]
    truncation: f64,
    /// Write the flipped TSDF instead.
    #[arg(long)]
    flipped: bool,
}

#[derive(Debug, Args)]
struct LgaArgs {
    /// Label grid (VXG1, dtype 0).
    labels: PathBuf,
    /// Output LGA grid (dtype 2).
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WeightsArgs {
    /// LGA grid (VXG1, dtype 2).
    lga: PathBuf,
    /// Output importance grid (dtype 1).
    out: PathBuf,
    #[arg(long, default_value_t = ssc_core::lga::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = ssc_core::lga::DEFAULT_ALPHA, allow_negative_numbers = true)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// LGA grids (dtype 2) or label grids (dtype 0); counts are summed.
    #[arg(required = true)]
    grids: Vec<PathBuf>,
    /// Print CSV instead of the text report.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossName {
    Pa,
    Wce,
    Focal,
    Dice,
}

#[derive(Debug, Args)]
struct LossArgs {
    /// Score volume (PRB1), probabilities or logits.
    scores: PathBuf,
    /// Label grid (dtype 0).
    labels: PathBuf,
    /// Importance grid (dtype 1).
    importance: PathBuf,
    #[arg(long, value_enum, default_value_t = LossName::Pa)]
    loss: LossName,
    /// Print all four losses.
    #[arg(long)]
    all: bool,
    /// Voxels to include (dtype 3); all voxels when omitted.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-12)]
    epsilon: f64,
    /// Class weights for wce, comma separated, one per class.
    #[arg(long, value_delimiter = ',', conflicts_with = "frequency_weights")]
    weights: Option<Vec<f64>>,
    /// Derive wce weights from inverse class frequency of the labels.
    #[arg(long)]
    frequency_weights: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AverageName {
    Micro,
    Macro,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted label grid (dtype 0).
    #[arg(required_unless_present = "aggregate")]
    pred: Option<PathBuf>,
    /// Ground truth label grid (dtype 0).
    #[arg(required_unless_present = "aggregate")]
    gt: Option<PathBuf>,
    /// Evaluation mask (dtype 3).
    #[arg(required_unless_present = "aggregate")]
    mask: Option<PathBuf>,
    /// File listing one "pred gt mask" triple per line; relative paths are
    /// resolved against the list's directory.
    #[arg(long, conflicts_with = "pred")]
    aggregate: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AverageName::Micro)]
    average: AverageName,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    /// Wraps a library error, naming the file it came from.
    pub fn at(path: &Path, e: ssc_core::Error) -> Self {
        Failure {
            code: classify(&e),
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn of(e: ssc_core::Error) -> Self {
        Failure {
            code: classify(&e),
            message: e.to_string(),
        }
    }
}

fn classify(e: &ssc_core::Error) -> u8 {
    if e.is_numeric_domain() {
        EXIT_NUMERIC
    } else {
        EXIT_IO
    }
}

fn main() -> ExitCode {
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
    let result = match cli.command {
        Command::Encode(a) => commands::encode(a),
        Command::Lga(a) => commands::lga(a),
        Command::Weights(a) => commands::weights(a),
        Command::Stats(a) => commands::stats(a),
        Command::Loss(a) => commands::loss(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("ssc: {f}");
            ExitCode::from(f.code)
        }
    }
}
