use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tandem", version, about = "Optimal service-resource allocation in a two-node tandem queue")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the average-cost optimality equation by relative value iteration.
    Solve(SolveArgs),
    /// Solve, then verify structural properties of the solution.
    Check(CheckArgs),
    /// Exact average cost of a policy from the stationary distribution.
    Evaluate(EvaluateArgs),
    /// Estimate the average cost of a policy by simulation.
    Simulate(SimulateArgs),
    /// Exhaustive search over all policies on a tiny box.
    Oracle(OracleArgs),
    /// Solve once per value of a config parameter.
    Sweep(SweepArgs),
    /// Write a config file with rate and cost tables generated from named families.
    MakeConfig(MakeConfigArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model config (JSON, or TOML when the extension is .toml).
    pub config: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub l1: usize,
    #[arg(long, default_value_t = 60)]
    pub l2: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tie_tol: f64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "tandem-out")]
    pub out: PathBuf,
    /// Write results even when value iteration hits the iteration cap.
    #[arg(long)]
    pub allow_unconverged: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Strict,
    Info,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// States closer than this to the upper boundary are excluded from comparisons.
    #[arg(long, default_value_t = 3)]
    pub margin: usize,
    #[arg(long, value_enum, default_value_t = Mode::Strict)]
    pub mode: Mode,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct PolicySource {
    /// Policy table in the format of policy.csv.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Solve first and use the resulting policy.
    #[arg(long)]
    pub from_solve: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: PolicySource,
    #[arg(long, default_value_t = 1e-12)]
    pub pi_tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub pi_max_iters: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: PolicySource,
    #[arg(long, default_value_t = 1_000_000)]
    pub events: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub batches: usize,
    #[arg(long, default_value_t = 0.2)]
    pub warmup: f64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1e-14)]
    pub pi_tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub pi_max_iters: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scalar config key: `lambda`, `h1`, `h2`, or `node1.mu.2` style array entries.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub margin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Toml,
}

#[derive(Debug, Args)]
pub struct MakeConfigArgs {
    #[arg(long, default_value = "tandem-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h2: f64,
    /// Action grid shared by both nodes, e.g. `0,0.5,1`.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub grid: Vec<f64>,
    /// Rate family for node 1: `linear:K`, `power:K:P` or `table:v0,v1,...`.
    #[arg(long)]
    pub mu1: String,
    #[arg(long)]
    pub mu2: String,
    #[arg(long, default_value = "linear:0")]
    pub cost1: String,
    #[arg(long, default_value = "linear:0")]
    pub cost2: String,
}
