use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod input;

#[derive(Parser, Debug)]
#[command(name = "lutharm", version, about = "Video harmonization with neighbor-fitted 3D color LUTs")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LUTHARM_THREADS")]
    threads: Option<usize>,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Log more detail (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Heuristic,
    Gd,
    Ls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fusion {
    Lut,
    Harm,
    Blend,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a LUT from the neighbor window of one frame.
    FitLut(FitLutArgs),
    /// Apply a LUT to the foreground of every frame in a directory.
    ApplyLut(ApplyLutArgs),
    /// Run the full pipeline over a sample.
    Harmonize(HarmonizeArgs),
    /// Synthesize composite samples from real clips and a LUT pool.
    MakeComposite(MakeCompositeArgs),
    /// Select a mutually diverse subset of a LUT pool.
    SelectLuts(SelectLutsArgs),
    /// MSE / fMSE / PSNR / fSSIM table for predicted frames.
    Eval(EvalArgs),
    /// Temporal loss over ground-truth-consistent frame pairs.
    TemporalLoss(TemporalLossArgs),
    /// Plackett-Luce scores from a ranking file.
    PlScores(PlScoresArgs),
}

#[derive(clap::Args, Debug)]
pub struct FitLutArgs {
    /// Sample directory.
    #[arg(long)]
    pub sample: PathBuf,
    /// Frame index (0-based).
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Neighbors on each side of the frame.
    #[arg(long = "t", default_value_t = 8)]
    pub neighbors: usize,
    /// Bins per color axis.
    #[arg(long = "b", default_value_t = 32)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = Method::Heuristic)]
    pub method: Method,
    /// Harmonizer to run instead of the sample's stored `harmonized/` frames:
    /// identity, affine or oracle.
    #[arg(long)]
    pub harmonizer: Option<String>,
    /// Gradient-descent steps.
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Gradient-descent step size relative to the stable limit.
    #[arg(long, default_value_t = 1.0)]
    pub step_size: f64,
    /// Output LUT (`.cube` or native format by extension).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct ApplyLutArgs {
    /// LUT file (`.cube` or native).
    #[arg(long)]
    pub lut: PathBuf,
    /// Directory of `%05d.png` frames.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory of `%05d.png` masks (default: whole frame).
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct HarmonizeArgs {
    /// Sample directory.
    #[arg(long)]
    pub sample: PathBuf,
    /// Neighbors on each side of every frame.
    #[arg(long = "t", default_value_t = 8)]
    pub neighbors: usize,
    /// Bins per color axis.
    #[arg(long = "b", default_value_t = 32)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = Fusion::Lut)]
    pub fusion: Fusion,
    /// LUT weight for `--fusion blend`.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// identity, affine, oracle or stored (the sample's `harmonized/` frames).
    #[arg(long, default_value = "affine")]
    pub harmonizer: String,
    /// Resize every frame to N x N on load.
    #[arg(long)]
    pub resize: Option<usize>,
    /// Output directory for refined frames and `report.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct MakeCompositeArgs {
    /// A real sample directory, or a directory of them.
    #[arg(long)]
    pub real: PathBuf,
    /// Directory of `.cube` / `.lut` files.
    #[arg(long)]
    pub luts: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct SelectLutsArgs {
    /// Directory of `.cube` / `.lut` files.
    #[arg(long)]
    pub luts: PathBuf,
    /// A sample directory, or a directory of them, whose real frames and
    /// masks serve as probes.
    #[arg(long)]
    pub probes: PathBuf,
    /// Number of LUTs to keep.
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Write the kept LUT ids here, one per line.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    /// Predicted frames.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth frames.
    #[arg(long)]
    pub gt: PathBuf,
    /// Foreground masks.
    #[arg(long)]
    pub masks: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct TemporalLossArgs {
    /// Predicted frames.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth frames.
    #[arg(long)]
    pub gt: PathBuf,
    /// Backward flows, one per consecutive pair.
    #[arg(long)]
    pub flows: PathBuf,
    /// Foreground masks.
    #[arg(long)]
    pub masks: PathBuf,
    /// Occlusion-mask sharpness.
    #[arg(long, default_value_t = 50.0)]
    pub lambda: f64,
    /// Keep pairs whose ground-truth loss is at most this.
    #[arg(long, default_value_t = 4.5)]
    pub threshold: f64,
}

#[derive(clap::Args, Debug)]
pub struct PlScoresArgs {
    /// One ranking per line: a permutation of 1-based item ids, best first.
    #[arg(long)]
    pub rankings: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(&cli.command, cli.format) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
