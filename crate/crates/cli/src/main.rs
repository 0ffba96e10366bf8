//! `evseg`: event simulation, event representations, training, evaluation
//! and result tables for RGB+event segmentation.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "evseg", version, about = "Event-aware semantic segmentation workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate events between adjacent frames of a sequence.
    Simulate(SimulateArgs),
    /// Convert an event file into a dense representation.
    Voxelize(VoxelizeArgs),
    /// Write the fixed-seed synthetic scene suite as train/test datasets.
    Generate(GenerateArgs),
    /// Train a segmentation network on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint or stored predictions on a dataset.
    Eval(EvalArgs),
    /// Render result CSVs as a table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pairs {
    /// Every adjacent pair.
    All,
    /// Only the last pair (penultimate and anchor frame).
    Anchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Binary,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Rgb,
    Event,
    S2d,
    D2s,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory of `NNNN.ras` frames, or a sequence directory with a `frames/` subdirectory.
    #[arg(long)]
    pub frames: PathBuf,
    /// Contrast threshold in log intensity.
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub log_eps: f64,
    #[arg(long, default_value_t = 32)]
    pub max_events: u32,
    #[arg(long, value_enum, default_value_t = Pairs::All)]
    pub pairs: Pairs,
    #[arg(long, value_enum, default_value_t = FileFormat::Binary)]
    pub format: FileFormat,
    /// Output directory (created).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    /// Binary (`EVT1`) or text event file.
    #[arg(long)]
    pub events: PathBuf,
    /// One of B1, B2, B18, P, P+N.
    #[arg(long)]
    pub repr: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub train: usize,
    #[arg(long, default_value_t = 50)]
    pub test: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Event representation; defaults to B2 (event, s2d) or P+N (d2s).
    #[arg(long)]
    pub repr: Option<String>,
    /// Dataset root.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Checkpoint to write.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Loss curve CSV; defaults to `<ckpt>.losses.csv`.
    #[arg(long)]
    pub losses: Option<PathBuf>,
    /// TOML file with defaults that command-line flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train` (its `.model.json` must sit beside it).
    #[arg(long, conflicts_with = "pred", required_unless_present = "pred")]
    pub ckpt: Option<PathBuf>,
    /// Directory of `<sequence id>.ras` predicted label maps.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Condition filter such as `light=night`; repeat to intersect.
    #[arg(long)]
    pub slice: Vec<String>,
    /// Metrics CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics CSVs written by `eval`.
    #[arg(long = "in", num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Append the published reference rows.
    #[arg(long)]
    pub fixtures: bool,
    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    pub format: TableFormat,
    /// Write to a file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Applies `EVSEG_THREADS` to the worker pool.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("EVSEG_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("EVSEG_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Voxelize(a) => commands::voxelize(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or_default();
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprint!("{text}");
            eprintln!("{}", err.to_line());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code())
        }
    }
}
