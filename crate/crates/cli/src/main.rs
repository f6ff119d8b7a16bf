mod error;
mod evaluate;
mod gen_data;
mod images;
mod recon;
mod report;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use upcmr::classical::CropSpec;
use upcmr::kspace::{AccelFactor, Trajectory};
use upcmr::training::CsmSource;

use error::CliError;

/// Undersampled cardiac cine reconstruction: data generation, training,
/// reconstruction, evaluation and reporting.
#[derive(Parser, Debug)]
#[command(name = "upcmr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic multi-coil cine dataset.
    GenData(GenDataArgs),
    /// Train the network with a curriculum schedule.
    Train(TrainArgs),
    /// Reconstruct undersampled slices with a learned or classical method.
    Reconstruct(ReconArgs),
    /// Tabulate PSNR, SSIM and NMSE of reconstructions against references.
    Evaluate(EvaluateArgs),
    /// Render loss curves, a PSNR heat map and a comparison figure.
    Report(ReportArgs),
}

#[derive(clap::Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub slices: usize,
    #[arg(long, default_value_t = 8)]
    pub coils: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Image size as HEIGHTxWIDTH.
    #[arg(long, default_value = "32x32", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Flat,
}

impl Strategy {
    pub fn key(self) -> &'static str {
        match self {
            Strategy::One => "1",
            Strategy::Two => "2",
            Strategy::Flat => "flat",
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: Strategy,
    /// TOML file with `[train]` settings and an optional `[schedule]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint directory to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Slices held out for validation, taken from the end of the dataset.
    #[arg(long, default_value_t = 1)]
    pub val_slices: usize,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Upcmr,
    Zf,
    Sense,
    Grappa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CsmArg {
    Reference,
    Estimated,
}

impl From<CsmArg> for CsmSource {
    fn from(c: CsmArg) -> Self {
        match c {
            CsmArg::Reference => CsmSource::Reference,
            CsmArg::Estimated => CsmSource::Estimated,
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct ReconArgs {
    /// Checkpoint directory; required for the learned method.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_trajectory)]
    pub trajectory: Trajectory,
    #[arg(long, value_parser = parse_accel)]
    pub accel: AccelFactor,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub out: PathBuf,
    /// Mask seed; slice `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "reference")]
    pub csm: CsmArg,
    /// CG iterations for SENSE.
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
}

#[derive(clap::Args, Debug)]
pub struct EvaluateArgs {
    /// A reconstruct output, or a directory of them.
    #[arg(long)]
    pub rec: PathBuf,
    /// A dataset directory or another reconstruct output.
    #[arg(long)]
    pub gnd: PathBuf,
    /// `half`, `full`, a fraction such as 0.5, or ROWSxCOLS.
    #[arg(long, default_value = "half", value_parser = parse_crop)]
    pub crop: CropSpec,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct ReportArgs {
    /// Metric logs written by train.
    #[arg(long, num_args = 1.., required = true)]
    pub logs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset for the comparison figure.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint for the figure's method column.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HEIGHTxWIDTH, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad dimension '{v}' in '{s}'"));
    let (h, w) = (parse(h)?, parse(w)?);
    let min = upcmr::kspace::ACS_SIZE;
    if h < min || w < min {
        return Err(format!("size {h}x{w} is below the {min}x{min} minimum"));
    }
    Ok((h, w))
}

fn parse_trajectory(s: &str) -> Result<Trajectory, String> {
    s.parse().map_err(|e: upcmr::Error| e.to_string())
}

fn parse_accel(s: &str) -> Result<AccelFactor, String> {
    let r: usize = s.parse().map_err(|_| format!("bad acceleration '{s}'"))?;
    AccelFactor::new(r).map_err(|e| e.to_string())
}

fn parse_crop(s: &str) -> Result<CropSpec, String> {
    s.parse().map_err(|e: upcmr::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => gen_data::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Reconstruct(a) => recon::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::Report(a) => report::run(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
