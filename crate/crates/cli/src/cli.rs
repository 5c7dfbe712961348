use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Load distribution, grasp-constrained time-optimal planning and weight
/// calibration for suction-cup grippers. Every input document is JSON;
/// sample datasets and trajectories are CSV.
#[derive(Debug, Parser)]
#[command(name = "grasp-totp", version, about)]
pub struct Cli {
    /// Run every data-parallel stage on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distribute a tool wrench over the cups of a gripper.
    Distribute(DistributeArgs),
    /// Plan a time-optimal traversal of a scenario's path.
    Plan(PlanArgs),
    /// Re-verify every constraint of a scenario against a trajectory CSV.
    Check(CheckArgs),
    /// Largest object mass that a fixed trajectory can carry.
    Maxload(MaxloadArgs),
    /// Fit stiffness weights and the compression threshold to wrench samples.
    Fitweights(FitArgs),
    /// Generate a noiseless or noisy sample dataset from a gripper model.
    SynthSamples(SynthArgs),
    /// Write the built-in grippers, chains, paths, objects, limits,
    /// scenarios and datasets as files.
    ExportPresets(ExportArgs),
}

#[derive(Debug, Clone, Copy, Default, Args)]
#[group(multiple = false)]
pub struct Method {
    /// Weighted least-squares distribution with the gripper's normal weights (default).
    #[arg(long)]
    pub qp: bool,
    /// Minimum L1 distribution solved as a linear program.
    #[arg(long)]
    pub lp: bool,
    /// Least squares with compressed-cup weight adjustment.
    #[arg(long)]
    pub adjusted: bool,
    /// Print both the least-squares and the L1 distributions with support sizes and norms.
    #[arg(long)]
    pub compare: bool,
}

#[derive(Debug, Args)]
pub struct DistributeArgs {
    /// Gripper document.
    #[arg(long)]
    pub gripper: PathBuf,
    /// Tool wrench `m_x m_y m_z f_x f_y f_z` in N·m and N, space or comma separated.
    #[arg(long, num_args = 1..=6, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub wrench: Vec<f64>,
    #[command(flatten)]
    pub method: Method,
    /// Also write the per-cup table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Scenario document.
    pub scenario: PathBuf,
    /// Write the trajectory table here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also write the JSON summary here; it is always printed to stdout.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Enforce grasp constraints regardless of the scenario setting.
    #[arg(long, conflicts_with = "no_grasp")]
    pub grasp: bool,
    /// Plan with kinematic limits only.
    #[arg(long)]
    pub no_grasp: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub scenario: PathBuf,
    /// Trajectory CSV as written by `plan`.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Check grasp constraints regardless of the scenario setting.
    #[arg(long, conflicts_with = "no_grasp")]
    pub grasp: bool,
    #[arg(long)]
    pub no_grasp: bool,
}

#[derive(Debug, Args)]
pub struct MaxloadArgs {
    pub scenario: PathBuf,
    /// Trajectory CSV as written by `plan`. Without it the object is held at rest.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Sample CSV: a `cups,<N>` header, then the tool wrench and each cup
    /// wrench per row, each as `m_x,m_y,m_z,f_x,f_y,f_z`.
    pub dataset: PathBuf,
    /// Gripper document; its weights seed the first start.
    #[arg(long)]
    pub gripper: PathBuf,
    /// Seed for the random multi-start points.
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Number of Nelder–Mead starts.
    #[arg(long, default_value_t = 16)]
    pub starts: usize,
    /// Fit all six wrench components instead of forces only.
    #[arg(long)]
    pub full_wrench: bool,
    /// Write per-sample residuals of the fitted weights here.
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    /// Also write the JSON result here; it is always printed to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Gripper document.
    #[arg(long)]
    pub gripper: PathBuf,
    /// Weights document overriding the gripper's weights.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 150)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian force noise, as a fraction of each cup's force magnitude.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Target directory.
    #[arg(default_value = "presets")]
    pub dir: PathBuf,
}
