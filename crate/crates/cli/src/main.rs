mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Double-classifier domain adaptation: data generation, training,
/// evaluation and verification.
#[derive(Debug, Parser)]
#[command(name = "dcp", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Base random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for every file the command writes; defaults to the
    /// current directory, and to stdout only for `gradcheck` and `schedule`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl Common {
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Blobs,
    Moons,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic source/target pair as embedding CSVs.
    GenData(GenDataArgs),
    /// Train on a source/target pair.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled dataset.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients of every loss.
    Gradcheck(GradcheckArgs),
    /// Tabulate both threshold schedules.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "blobs")]
    pub kind: DataKind,
    /// Number of classes (blobs only).
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Feature dimension (blobs only).
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub n_per_class: usize,
    /// Target rotation in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rotation: f64,
    /// Target offset as comma-separated coordinates (blobs only).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub translation: Vec<f64>,
    #[arg(long, default_value_t = 0.6)]
    pub sigma: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Source embedding CSV.
    #[arg(long, required_unless_present = "from_manifest")]
    pub source: Option<PathBuf>,
    /// Target embedding CSV.
    #[arg(long, required_unless_present = "from_manifest")]
    pub target: Option<PathBuf>,
    /// TOML or JSON file overriding the default training configuration.
    #[arg(long, conflicts_with = "from_manifest")]
    pub config: Option<PathBuf>,
    /// Repeat the run recorded in a manifest.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    /// Weight of the alignment losses.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Disable high-confidence pseudo-labels.
    #[arg(long)]
    pub no_pseudo: bool,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled embedding CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random instances per loss.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Negate the analytic gradient of one loss.
    #[arg(long, hide = true)]
    pub inject_sign_flip: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 1000)]
    pub t_max: u64,
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Schedule(a) => commands::schedule(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
