//! `histdp` — generate data, pick clipping thresholds, release histograms,
//! and run experiment sweeps from the command line.
//!
//! Exit codes: 0 on success, 2 for usage problems (bad flags or flag
//! combinations), 1 for runtime failures (I/O, malformed data, infeasible
//! parameters). Errors are a single `error: ...` line on stderr.

// Flag guards are written `!(x > 0.0)` so that NaN fails validation; the
// suggested `x <= 0.0` rewrite would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod debias_cmd;
mod estimate;
mod experiment_cmd;
mod output;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use histdp::FileFormat;

#[derive(Debug)]
pub enum CliError {
    /// The request itself was malformed (exit 2).
    Usage(String),
    /// The request was fine but could not be completed (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<histdp::Error> for CliError {
    fn from(err: histdp::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "histdp",
    version,
    about = "User-level differentially private histograms with adaptive clipping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and a sidecar describing it.
    Synth(SynthArgs),
    /// Estimate a clipping threshold and release the histogram.
    Estimate(EstimateArgs),
    /// Paired clipped-vs-debiased trials on single-item counts.
    Debias(DebiasArgs),
    /// Run an experiment sweep from a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenArg {
    PoissonDirichlet,
    HeavyTail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LawArg {
    Zipf,
    LogNormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for FileFormat {
    fn from(f: FormatArg) -> FileFormat {
        match f {
            FormatArg::Csv => FileFormat::Csv,
            FormatArg::Jsonl => FileFormat::Jsonl,
        }
    }
}

/// Picks the file format: explicit flag first, then the file extension.
pub fn resolve_format(flag: Option<FormatArg>, path: &std::path::Path) -> FileFormat {
    match flag {
        Some(f) => f.into(),
        None => match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => FileFormat::Jsonl,
            _ => FileFormat::Csv,
        },
    }
}

#[derive(Parser)]
pub struct SynthArgs {
    /// Generator family.
    #[arg(long, value_enum)]
    pub gen: GenArg,
    /// Number of users.
    #[arg(long)]
    pub n: usize,
    /// Domain size (poisson-dirichlet is single-item).
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Dirichlet concentration (poisson-dirichlet only).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Total expected mass S; defaults to n so the mean rate is 1.
    #[arg(long)]
    pub mass: Option<f64>,
    /// Size law for heavy-tail data.
    #[arg(long, value_enum)]
    pub law: Option<LawArg>,
    /// Zipf exponent (> 1).
    #[arg(long)]
    pub exponent: Option<f64>,
    /// Log-normal location.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Log-normal scale (> 0).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Master seed; HISTDP_SEED is used when the flag is absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset path; a `<out>.spec.json` sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// File format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Non-private surrogate-loss minimizer (Gaussian release).
    Exact,
    /// Non-private size-quantile rule (Laplace release).
    LaplaceQuantile,
    /// Private quantile tracker (Gaussian release).
    DpQuantile,
    /// Private subgradient descent on the surrogate (Gaussian release).
    Dpsgd,
    /// Output perturbation of the regularized minimizer (Gaussian release).
    OutputPerturb,
}

#[derive(Parser)]
pub struct EstimateArgs {
    /// Input dataset (CSV or JSONL with user_id,item,count).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Restrict to the top-d items by aggregate count.
    #[arg(long)]
    pub top_d: Option<usize>,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Release epsilon.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// Release delta; defaults to 1/(2n) (0 for laplace-quantile).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Threshold-estimation epsilon.
    #[arg(long, default_value_t = 0.1)]
    pub eps_prime: f64,
    /// Threshold-estimation delta; defaults to 1/(2n) for dpsgd, else 0.
    #[arg(long)]
    pub delta_prime: Option<f64>,
    /// Sparsity cap s; defaults to max(0.1 d, 1).
    #[arg(long)]
    pub s: Option<f64>,
    /// Threshold upper bound (required for dpsgd and output-perturb).
    #[arg(long)]
    pub cm: Option<f64>,
    /// Iterations for the private quantile tracker.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the released histogram here (JSON); inline in the record otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Parser)]
#[command(group(ArgGroup::new("threshold").required(true).args(["c", "auto_c"])))]
#[command(group(ArgGroup::new("data").required(true).args(["input", "synth_n"])))]
pub struct DebiasArgs {
    /// Input dataset of single-item counts.
    #[arg(long, conflicts_with_all = ["synth_n", "alpha", "mass"])]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Restrict to the top-d items before extracting counts (must leave 1).
    #[arg(long)]
    pub top_d: Option<usize>,
    /// Total user count behind --input, padding users missing from the file
    /// with zero counts (the file format cannot carry zero-count rows).
    #[arg(long, conflicts_with = "synth_n")]
    pub n: Option<usize>,
    /// Generate Poisson-Dirichlet counts with this many users instead.
    #[arg(long = "synth-n")]
    pub synth_n: Option<usize>,
    /// Dirichlet concentration for --synth-n.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Total mass for --synth-n; defaults to n.
    #[arg(long)]
    pub mass: Option<f64>,
    /// Fixed integer clipping threshold.
    #[arg(long)]
    pub c: Option<u32>,
    /// Estimate the threshold privately per trial (top-ceil(1/eps) count).
    #[arg(long = "auto-c")]
    pub auto_c: bool,
    /// Release epsilon.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// Budget for the private threshold when --auto-c is set.
    #[arg(long, default_value_t = 0.1)]
    pub eps_prime: f64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Report raw debiased rates instead of clamping them into [0, 1].
    #[arg(long)]
    pub no_rate_clamp: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write per-trial records here (JSONL); only the summary prints otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Parser)]
pub struct ExperimentArgs {
    /// JSON experiment config; top-level "kind" picks histogram or count.
    #[arg(long)]
    pub config: PathBuf,
    /// Per-trial results CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary CSV; defaults to `<out>.summary.csv`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Overrides the config's master seed when given (or via HISTDP_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Seed precedence: flag, then HISTDP_SEED, then `None` (caller's default).
pub fn explicit_seed(flag: Option<u64>) -> CliResult<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("HISTDP_SEED") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::usage(format!("HISTDP_SEED must be an unsigned integer, got {raw:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(err) => Err(CliError::usage(format!("HISTDP_SEED: {err}"))),
    }
}

pub fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    Ok(explicit_seed(flag)?.unwrap_or(0))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(args) => synth::run(args),
        Command::Estimate(args) => estimate::run(args),
        Command::Debias(args) => debias_cmd::run(args),
        Command::Experiment(args) => experiment_cmd::run(args),
    }
}

/// Collapses a clap error to its message lines, dropping usage boilerplate.
fn flatten_parse_error(err: &clap::Error) -> String {
    let rendered = err.to_string();
    let mut parts: Vec<&str> = Vec::new();
    for line in rendered.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("Usage:") || line.starts_with("For more information") {
            break;
        }
        parts.push(line);
    }
    let joined = parts.join("; ");
    joined.strip_prefix("error: ").unwrap_or(&joined).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {}", flatten_parse_error(&err));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (msg, code) = match err {
                CliError::Usage(m) => (m, 2),
                CliError::Runtime(m) => (m, 1),
            };
            // Keep errors to one machine-parsable line.
            eprintln!("error: {}", msg.replace('\n', "; "));
            ExitCode::from(code)
        }
    }
}
