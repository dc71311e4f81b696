//! `osr`: synthetic data, calibration, prediction, evaluation and sweeps for
//! open-set recognition on classifier activation vectors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "osr",
    version,
    about = "Open-set recognition with OpenMax and softmax thresholding"
)]
struct Cli {
    /// Run batch work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic embedding dataset.
    Synth(SynthArgs),
    /// Fit MAVs and Weibull tails on the train split and write a model file.
    Calibrate(CalibrateArgs),
    /// Score one split with a calibrated model.
    Predict(PredictArgs),
    /// Report closed-set, softmax, softmax-threshold and OpenMax accuracies.
    Evaluate(EvaluateArgs),
    /// Grid search over alpha, tail size and threshold.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum WeightFormArg {
    Cdf,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum TauMode {
    Zero,
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum SplitArg {
    Train,
    Eval,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum SelectOn {
    Test,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Rounding {
    Up,
    Down,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Directory for embeddings.jsonl, labels.json and synth_spec.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed for the built-in five-class spec.
    #[arg(long, default_value_t = 20_240_601, conflicts_with = "spec")]
    seed: u64,
    /// JSON spec file replacing the built-in spec.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CalibrateArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Number of top-ranked classes revised per sample.
    #[arg(long)]
    alpha: usize,
    /// Largest distances per class used for the Weibull fit.
    #[arg(long, default_value_t = 20)]
    tail: usize,
    #[arg(long, value_enum, default_value_t = WeightFormArg::Cdf)]
    weight_form: WeightFormArg,
    #[arg(long, value_enum, default_value_t = TauMode::Zero)]
    tau_mode: TauMode,
    /// Directory for model.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Label map to check against the model's; defaults to the model's own.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    epsilon: f64,
    /// Override the weight form stored in the model.
    #[arg(long, value_enum)]
    weight_form: Option<WeightFormArg>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Directory for predictions.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, value_enum)]
    weight_form: Option<WeightFormArg>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Directory for report.json, report.txt and confusion_<mode>.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Alphas to try; defaults to every integer in [N/2, N].
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<usize>,
    /// Tail sizes to try; defaults to 20,25,30,35,40.
    #[arg(long, value_delimiter = ',')]
    tail: Vec<usize>,
    /// Thresholds to try; defaults to 0.05 through 0.95 in steps of 0.05.
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    /// Rounding of N/2 for the default alpha range.
    #[arg(long, value_enum, default_value_t = Rounding::Up)]
    alpha_rounding: Rounding,
    #[arg(long, value_enum, default_value_t = WeightFormArg::Cdf)]
    weight_form: WeightFormArg,
    #[arg(long, value_enum, default_value_t = TauMode::Zero)]
    tau_mode: TauMode,
    /// Split the grid is scored on.
    #[arg(long, value_enum, default_value_t = SelectOn::Test)]
    select_on: SelectOn,
    /// Directory for sweep.csv, best.json and curves/.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Exit code for a failed run: 1 when the inputs were valid but a computation
/// could not complete, 2 for usage, I/O and validation problems.
fn exit_code(err: &anyhow::Error) -> u8 {
    let computation = err
        .chain()
        .filter_map(|e| e.downcast_ref::<osr_core::Error>())
        .any(osr_core::Error::is_computation);
    if computation {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        osr_core::Execution::Sequential
    } else {
        osr_core::Execution::Parallel
    };
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Predict(a) => commands::predict(a, exec),
        Command::Evaluate(a) => commands::evaluate(a, exec),
        Command::Sweep(a) => commands::sweep(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
