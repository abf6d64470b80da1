//! The `spn` command-line tool.
//!
//! Every subcommand resolves one instance from `--config` or `--scenario`,
//! draws all randomness from the master `--seed`, and writes its artifacts to
//! `--out`. Exit codes: 0 success, 1 validation or verification failure and
//! other runtime errors, 2 usage or unreadable input, 3 resource limits.

mod commands;
mod error;
mod input;
mod policies;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spn_core::sim::RolloutMode;

pub use error::CliError;
pub use input::{load_config, load_scenario, preset, Instance, RunFile, PRESETS};
pub use policies::PolicySpec;

#[derive(Debug, Parser)]
#[command(name = "spn", version, about = "Scheduling policies for stochastic processing networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a network for structural violations.
    Validate(InstanceArgs),
    /// Solve the instance with every exact solver and write a certificate.
    Verify(VerifyArgs),
    /// Enumerate reachable states and report action-space sizes.
    Enumerate(EnumerateArgs),
    /// Train a policy with atomic PPO.
    Train(TrainArgs),
    /// Estimate the gain of one policy by simulation.
    Evaluate(EvaluateArgs),
    /// Evaluate several policies on common random numbers.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    /// Network file, or a run file with a [network] or [scenario] table.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub config: Option<PathBuf>,
    /// Built-in instance (m1, switch2, hospital2) or a scenario file.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Master seed; overrides the run file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Kernel cache file; read when present, written otherwise.
    #[arg(long)]
    pub kernel_cache: Option<PathBuf>,
    /// Largest state space that may be enumerated.
    #[arg(long, default_value_t = spn_core::state_space::DEFAULT_STATE_LIMIT)]
    pub state_limit: usize,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub kernels: KernelArgs,
    /// Span tolerance of value iteration.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Bound on gain and relative-value gaps.
    #[arg(long, default_value_t = 1e-8)]
    pub gap_tol: f64,
    /// Bound on optimality-equation residuals.
    #[arg(long, default_value_t = 1e-8)]
    pub residual_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub kernels: KernelArgs,
}

/// Hyperparameter overrides; unset fields keep the run file or default value.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub critic_epochs: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub entropy_coef: Option<f64>,
    #[arg(long)]
    pub policy_lr: Option<f64>,
    #[arg(long)]
    pub critic_lr: Option<f64>,
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub normalize_advantages: Option<bool>,
    #[arg(long)]
    pub max_samples: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub kernels: KernelArgs,
    /// Training settings file; replaces the run file's [train] table.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: TrainOverrides,
    /// Report the exact gain of the greedy policy after every iteration.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    KStep,
    PassingLast,
}

impl From<ModeArg> for RolloutMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::KStep => RolloutMode::KStep,
            ModeArg::PassingLast => RolloutMode::PassingLast,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyMode {
    /// Most probable feasible action.
    Greedy,
    /// Sample from the policy distribution.
    Stochastic,
}

#[derive(Debug, Clone, Args)]
pub struct RolloutArgs {
    #[arg(long, value_enum, default_value = "k-step")]
    pub mode: ModeArg,
    /// How checkpointed policies act.
    #[arg(long, value_enum, default_value = "greedy")]
    pub policy_mode: PolicyMode,
    /// Trajectories M.
    #[arg(long, default_value_t = 16)]
    pub trajectories: usize,
    /// Time steps per trajectory T.
    #[arg(long, default_value_t = 2048)]
    pub horizon: usize,
    /// Add exact gains and the optimal gain from the enumerated model.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub kernels: KernelArgs,
    #[command(flatten)]
    pub rollout: RolloutArgs,
    /// Trained checkpoint to evaluate.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// Baseline policy: max-weight, greedy, random or pass.
    #[arg(long)]
    pub baseline: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub kernels: KernelArgs,
    #[command(flatten)]
    pub rollout: RolloutArgs,
    /// Comma-separated baselines and checkpoint paths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub policies: Vec<String>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(c) = &e {
                if c.is_resource_limit() {
                    eprintln!("hint: lower the per-class caps or tau_max, or raise --state-limit / max_samples");
                }
            }
            e.exit_code()
        }
    }
}
