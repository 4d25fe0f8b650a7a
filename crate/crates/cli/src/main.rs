//! `scancusum` command-line front-end.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::Format;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config values or input content (exit 2).
    Usage(String),
    /// Errors from the library; I/O failures exit 3, everything else 2.
    Core(scancusum::Error),
    /// File system failures (exit 3).
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_domain() => 2,
            CliError::Core(_) | CliError::Io { .. } => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl From<scancusum::Error> for CliError {
    fn from(e: scancusum::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "scancusum", version, about = "Scan-CUSUM change-point estimation and its simulation campaigns")]
pub struct Cli {
    /// TOML file with a `seed`, `threads` and one table per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results are identical for any value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    /// Output path; standard output when absent.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress messages on standard error.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a multi-sequence dataset (CSV) with its ground truth (JSON).
    Generate(GenerateArgs),
    /// Run scan-CUSUM on every sequence of a dataset.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Evaluate(EvaluateArgs),
    /// Calibrate c_scan to a false-alarm probability on pure noise.
    Calibrate(CalibrateArgs),
    /// Evaluate nu, beta_upper and the gamma functionals.
    Bounds(BoundsArgs),
    /// Monte-Carlo table of Delta^2 g_lower and Delta^2 g_scan.
    Table1(Table1Args),
    /// Information-sharing comparison over intensity laws.
    Table2(Table2Args),
    /// Detection, intensity estimation, refinement and evaluation on one dataset.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntensityKind {
    Constant,
    TwoPoint,
    Beta,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum JumpKind {
    Hmm,
    Normal,
    Point,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n_seq: Option<usize>,
    #[arg(long)]
    pub t_len: Option<usize>,
    #[arg(long, value_enum)]
    pub intensity: Option<IntensityKind>,
    /// Mean intensity q.
    #[arg(long)]
    pub q: Option<f64>,
    /// Two-point law: probability of the high value.
    #[arg(long, default_value_t = 0.01)]
    pub mass_hi: f64,
    /// Two-point law: high value as a multiple of q.
    #[arg(long, default_value_t = 100.0)]
    pub scale: f64,
    #[arg(long, value_enum)]
    pub jump: Option<JumpKind>,
    /// sigma_xi for hmm, sd for normal, Delta for point.
    #[arg(long)]
    pub jump_param: Option<f64>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    pub replicate: Option<u64>,
    /// Dataset CSV to write.
    #[arg(long)]
    pub data: PathBuf,
    /// Ground-truth JSON; defaults to `<data>.truth.json`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Dataset CSV (`t,seq_0,...`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub c_scan: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    /// Estimate sigma_x per sequence from successive differences.
    #[arg(long)]
    pub estimate_sigma: bool,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Intensity CSV (`t,a_hat`) for the extended mode.
    #[arg(long)]
    pub intensity_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Plain,
    Extended,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// JSON written by `detect`.
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub delta0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub t_len: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    Nu,
    BetaUpper,
    BetaWalk,
    GammaLower,
    GammaScan,
    Gamma,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(value_enum)]
    pub quantity: Quantity,
    /// Fixed jump size.
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub jump: Option<JumpKind>,
    #[arg(long)]
    pub jump_param: Option<f64>,
    /// Cut-off for gamma integrated over the jump law.
    #[arg(long)]
    pub delta0: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub max_horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    /// Comma-separated Delta values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub max_horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Table2Args {
    /// Start from the reduced profile (N = 30, T = 2000, q = 5e-4, 20 replicates).
    #[arg(long)]
    pub scaled: bool,
    #[arg(long)]
    pub n_seq: Option<usize>,
    #[arg(long)]
    pub t_len: Option<usize>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub c_scan: Option<f64>,
    /// Comma-separated subset of intensity laws.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub kinds: Option<Vec<IntensityKind>>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub c_scan: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    pub delta0: Option<f64>,
    #[arg(long)]
    pub em_max_iter: Option<usize>,
    #[arg(long)]
    pub em_tol: Option<f64>,
    /// Also write the estimated intensity as CSV (`t,a_hat`).
    #[arg(long)]
    pub a_hat_csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
