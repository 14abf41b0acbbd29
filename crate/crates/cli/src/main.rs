//! `topoid`: generate data, train, classify, recover, screen and evaluate.
//!
//! Exit codes: 0 success, 1 I/O, 2 validation, 3 numerical failure.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "topoid", version, about = "Topology identification from DER and substation measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate labelled train/test datasets from a feeder description.
    Generate(GenerateArgs),
    /// Fit the discriminant model on a training dataset.
    Train(TrainArgs),
    /// Classify complete observations.
    Classify(ClassifyArgs),
    /// Recover missing or withheld predictors, then classify.
    Recover(RecoverArgs),
    /// Screen a suspect unit with the likelihood-ratio benchmark.
    Detect(DetectArgs),
    /// Run evaluation sweeps and write reports.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Roc,
    Confusion,
    MissingUnits,
    Pairs,
    Anomaly,
    LoadVariants,
}

/// Predictor selection by metered unit or raw index.
#[derive(Args, Debug, Clone)]
pub struct Selection {
    /// Metered unit, e.g. DER3; expands to all of its predictors. Repeatable.
    #[arg(long = "unit")]
    pub units: Vec<String>,
    /// Comma-separated predictor indices (0-based).
    #[arg(long, value_delimiter = ',')]
    pub indices: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Feeder description; the built-in reference feeder when omitted.
    #[arg(long)]
    pub feeder: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n_per_topology: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of each topology's scenarios used for training.
    #[arg(long, default_value_t = 0.9)]
    pub split: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0.3)]
    pub load_std: f64,
    /// Load-type or loading-level preset applied to the feeder.
    #[arg(long, default_value = "base")]
    pub variant: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Diagonal shrinkage coefficient in [0, 1].
    #[arg(long, default_value_t = topoid_core::model::DEFAULT_SHRINKAGE)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Predictors to withhold from complete rows. Without a selection, the
    /// rows' own missing entries are recovered.
    #[command(flatten)]
    pub missing: Selection,
    /// Bounds `min:max` replacing the training range, one per selected
    /// predictor in ascending index order. Repeatable.
    #[arg(long = "bounds", allow_hyphen_values = true)]
    pub bounds: Vec<String>,
    /// Noise-free companion file; enables the correlation report.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub suspect: Selection,
    /// Fixed α threshold.
    #[arg(long, conflicts_with = "calibrate")]
    pub threshold: Option<f64>,
    /// Target false-alarm rate for quantile calibration on --calibration.
    #[arg(long, requires = "calibration")]
    pub calibrate: Option<f64>,
    /// Clean dataset used for calibration.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Multiplies the suspect values before screening.
    #[arg(long, default_value_t = 1.0)]
    pub manipulate: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Noise-free companion of the test set.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Training set; needed by the missing-units and pairs sweeps.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Feeder for the load-variants sweep; the reference feeder when omitted.
    #[arg(long)]
    pub feeder: Option<PathBuf>,
    /// Sweeps to run. Repeatable; defaults to roc and confusion.
    #[arg(long = "sweep", value_enum)]
    pub sweeps: Vec<Sweep>,
    /// Clean calibration set for the anomaly sweep.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, default_value_t = topoid_core::anomaly::DEFAULT_FALSE_ALARM)]
    pub target_false_alarm: f64,
    /// Fixed α threshold for the anomaly sweep instead of calibration.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Manipulation factors for the anomaly sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [0.9, 1.1])]
    pub scales: Vec<f64>,
    /// Scenarios per topology for the load-variants sweep.
    #[arg(long, default_value_t = 200)]
    pub n_per_topology: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Recover(a) => commands::recover(&a),
        Command::Detect(a) => commands::detect(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
