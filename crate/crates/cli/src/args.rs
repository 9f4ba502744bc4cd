use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "asymopt",
    version,
    about = "Asymptotic log-wealth moments, criterion optimization and calibration for linear factor strategies",
    after_help = "Every command writes its outputs and a manifest.json into --out. \
                  `asymopt replay --manifest PATH` re-runs a command and checks the outputs are byte-identical.\n\
                  Exit codes: 0 success, 1 usage, 2 input data, 3 numeric or optimizer failure."
)]
pub struct Cli {
    /// Model JSON; defaults to the built-in one-asset, one-factor reference model.
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,

    /// Seed for Monte Carlo and Latin hypercube sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Treat flagged results (non-stationary optima, failed sweep points) as failures.
    #[arg(long, global = true)]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Estimate a model from monthly data or from discrete regression estimates.
    ///
    /// Writes model.json and report.json.
    Calibrate(CalibrateArgs),
    /// Closed-form asymptotic moments for one strategy.
    ///
    /// Writes moments.json with K, varRate, P, Delta, Y, S and R.
    Moments(MomentsArgs),
    /// Moments along the tilt, or optima along θ or Γ.
    ///
    /// Writes sweep.csv. Mode H: columns H,K,P,varRate with h fixed.
    /// Modes theta and gamma: columns parameter,h,H,W,ratio,status, where
    /// ratio is H/h and status is ok, not_stationary or an error message.
    /// With several assets or factors, h and H expand to h_i and H_i_j.
    Sweep(SweepArgs),
    /// Monte Carlo estimates of the moments, with z-scores against the closed forms.
    ///
    /// Writes simulate.json (and paths.csv with --dump-paths).
    Simulate(SimulateArgs),
    /// Maximize the criterion W = K − (θ/4)·varRate + Γ·P over (h, H).
    ///
    /// Writes optimum.json.
    Optimize(OptimizeArgs),
    /// Re-run a command from its manifest and compare output hashes.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DriftMapArg {
    Euler,
    Log,
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["data", "from_tables"]))]
pub struct CalibrateArgs {
    /// CSV with header date,excess_return_1..m,factor_1..n; dates YYYY-MM.
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,

    /// Discrete estimates as JSON, or `reference` for the built-in 1970–2000
    /// monthly S&P 500 / T-bill tables (percent units).
    #[arg(long, value_name = "PATH|reference")]
    pub from_tables: Option<String>,

    /// Returns (and return coefficients) are in percent.
    #[arg(long)]
    pub returns_percent: bool,

    /// Multiplier applied to raw factor levels.
    #[arg(long, default_value_t = 1.0)]
    pub factor_scale: f64,

    /// Map from factor persistence to mean reversion: Φ − I or log Φ.
    #[arg(long, value_enum, default_value_t = DriftMapArg::Euler)]
    pub drift_map: DriftMapArg,

    /// Reject calibrations whose slowest mean reversion is weaker than this per month.
    #[arg(long, default_value_t = 1e-4)]
    pub min_mean_reversion: f64,
}

#[derive(Debug, Clone, Args)]
pub struct StrategyArgs {
    /// Base position h, comma-separated (length m); default all ones.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub h: Option<Vec<f64>>,

    /// Factor tilt H, row-major comma-separated (m×n); default zero.
    #[arg(long = "tilt", value_delimiter = ',', allow_hyphen_values = true)]
    pub tilt: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct MonteCarloArgs {
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,

    /// Horizon T in months.
    #[arg(long, default_value_t = 5000.0)]
    pub horizon: f64,

    /// Step size in months.
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,

    /// Factor step: exact Ornstein–Uhlenbeck transition or Euler.
    #[arg(long, value_enum, default_value_t = SchemeArg::Exact)]
    pub scheme: SchemeArg,

    /// Antithetic path pairs (paths must be even).
    #[arg(long)]
    pub antithetic: bool,

    /// Start factors at zero instead of a stationary draw.
    #[arg(long)]
    pub zero_start: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Exact,
    Euler,
}

#[derive(Debug, Clone, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub strategy: StrategyArgs,

    /// Also simulate and report z-scores of the closed forms.
    #[arg(long)]
    pub check: bool,

    #[command(flatten)]
    pub monte_carlo: MonteCarloArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    #[value(name = "H")]
    Tilt,
    Theta,
    Gamma,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizerArgs {
    /// Search box [-b, b] for every strategy coordinate.
    #[arg(long, default_value_t = 3.0)]
    pub grid_bound: f64,

    /// Grid points per coordinate.
    #[arg(long, default_value_t = 61)]
    pub grid_points: usize,

    /// Nelder–Mead runs from the best grid points.
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// H: tilt in [-3, 3], 121 points, h fixed. theta: θ log-spaced in
    /// [0.01, 100], 33 points. gamma: Γ scale in [0, 0.01], 11 points.
    #[arg(long, value_enum)]
    pub mode: SweepMode,

    /// First parameter value.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,

    /// Last parameter value.
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,

    /// Number of parameter values.
    #[arg(long)]
    pub points: Option<usize>,

    /// Base position for mode H.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub h: f64,

    /// θ for mode gamma.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,

    /// Γ for mode theta, comma-separated (length n); default zero.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub gamma: Option<Vec<f64>>,

    /// Γ direction for mode gamma, scaled by the parameter; default all ones.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub direction: Option<Vec<f64>>,

    /// Also write sweep.svg.
    #[arg(long)]
    pub svg: bool,

    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub strategy: StrategyArgs,

    #[command(flatten)]
    pub monte_carlo: MonteCarloArgs,

    /// Also write terminal u and X of every path to paths.csv.
    #[arg(long)]
    pub dump_paths: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    /// Risk sensitivity θ.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,

    /// Factor sensitivity Γ, comma-separated (length n); default zero.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub gamma: Option<Vec<f64>>,

    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// manifest.json written by an earlier run.
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
}
