use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "subdiff", version, about = "Fit, compare and check subdiffusion models for 2-D particle trajectories")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command. Values given on the command line override
/// those in the `--config` file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GlobalArgs {
    /// Master seed; required by every stochastic command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing) [default: .]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true, env = "SUBDIFF_THREADS")]
    pub threads: Option<usize>,
    /// TOML configuration file: top-level global keys plus one table per command.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pathwise MSD of each trajectory.
    Msd(MsdArgs),
    /// Grid posterior of one model for each trajectory.
    Fit(FitArgs),
    /// Simulate trajectories from a model.
    Simulate(SimulateArgs),
    /// Posterior model probabilities for each trajectory.
    Compare(CompareArgs),
    /// Hierarchical fit producing a test prior.
    HierFit(HierFitArgs),
    /// Posterior predictive p-values and prior predictive MSD ensembles.
    Check(CheckArgs),
    /// Residual draws and their densities.
    Residuals(ResidualsArgs),
    /// Simulation studies.
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Model selection matrix under synthetic or supplied test priors.
    Table1(Table1Args),
    /// Prior sensitivity study based on one trajectory.
    S4(S4Args),
}

impl Command {
    /// Name of the command's table in the configuration file.
    pub fn config_path(&self) -> &'static [&'static str] {
        match self {
            Command::Msd(_) => &["msd"],
            Command::Fit(_) => &["fit"],
            Command::Simulate(_) => &["simulate"],
            Command::Compare(_) => &["compare"],
            Command::HierFit(_) => &["hier-fit"],
            Command::Check(_) => &["check"],
            Command::Residuals(_) => &["residuals"],
            Command::Experiment(Experiment::Table1(_)) => &["experiment", "table1"],
            Command::Experiment(Experiment::S4(_)) => &["experiment", "s4"],
        }
    }
}

/// Trajectory inputs: CSV files or directories of CSV files.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct InputArgs {
    pub inputs: Vec<PathBuf>,
    /// Time step for files with a `frame` column instead of `t`.
    #[arg(long)]
    pub dt: Option<f64>,
}

/// Model family and grid resolution.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// `fbm`, `gle` (with --modes) or `gle:K`.
    #[arg(long)]
    pub model: Option<String>,
    /// Number of GLE modes.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Grid points per kernel axis [default: 400 fBM, 80 GLE; 100/30 on adapted grids]
    #[arg(long)]
    pub grid_n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MsdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Largest lag in steps [default: N/2]
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Subtract the mean increment before computing the MSD.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub detrend: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// `default`, `noninformative` or a test prior file [default: default]
    #[arg(long)]
    pub prior: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Draw parameters for each path from this test prior instead of the fixed values.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub hurst: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Natural log of the shortest GLE relaxation time (seconds).
    #[arg(long, allow_hyphen_values = true)]
    pub log_tau: Option<f64>,
    /// Drift `mu1,mu2` in microns per second [default: 0,0]
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    /// Standard deviations `s1,s2` [default: 1,1]
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Steps per path [default: 1800]
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Time step in seconds [default: 1/60]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of paths [default: 1]
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CompareArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Comma-separated models, e.g. `fbm,gle:2,gle:50`.
    #[arg(long)]
    pub models: Option<String>,
    /// Test prior files; each is used by the model of its family.
    #[arg(long = "prior")]
    pub priors: Vec<PathBuf>,
    /// Give models without a test prior the noninformative conjugate prior.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub noninformative: Option<bool>,
    /// Comma-separated prior model weights [default: equal]
    #[arg(long)]
    pub odds: Option<String>,
    #[arg(long)]
    pub grid_n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct HierFitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Posterior draws per trajectory [default: 10000]
    #[arg(long)]
    pub draws_per_dataset: Option<usize>,
    /// Gibbs iterations kept [default: 10000]
    #[arg(long)]
    pub n_iter: Option<usize>,
    /// Gibbs burn-in [default: 2000]
    #[arg(long)]
    pub n_burn: Option<usize>,
    /// Hyperprior exponent [default: dimension + 1]
    #[arg(long)]
    pub omega: Option<f64>,
    /// `draws` or `means` [default: draws]
    #[arg(long)]
    pub scatter: Option<String>,
    /// Base density of the Metropolis step: `default` or `flat` [default: default]
    #[arg(long)]
    pub base: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// `noninformative` or a test prior file.
    #[arg(long)]
    pub prior: Option<String>,
    /// Posterior predictive replicates [default: 100]
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma-separated MSD lags in seconds [default: 1/60,0.1,1,10]
    #[arg(long)]
    pub lags: Option<String>,
    /// Also write a prior predictive MSD ensemble with this many paths (test prior only).
    #[arg(long)]
    pub ensemble: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ResidualsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// `default`, `noninformative` or a test prior file [default: default]
    #[arg(long)]
    pub prior: Option<String>,
    /// Posterior draws [default: 10]
    #[arg(long)]
    pub draws: Option<usize>,
    /// Points of the density grid on [-5, 5] [default: 101]
    #[arg(long)]
    pub density_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Table1Args {
    /// Comma-separated models [default: fbm,gle:2]
    #[arg(long)]
    pub models: Option<String>,
    /// Test prior files replacing the built-in synthetic prior of their family.
    #[arg(long = "prior")]
    pub priors: Vec<PathBuf>,
    /// Datasets per generating model [default: 50, or 500 at full scale]
    #[arg(long)]
    pub n_datasets: Option<usize>,
    /// Steps per dataset [default: 300, or 1800 at full scale]
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Time step in seconds [default: 1/60]
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub full_scale: Option<bool>,
    #[arg(long)]
    pub grid_n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct S4Args {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Two comma-separated models [default: fbm,gle:200]
    #[arg(long)]
    pub models: Option<String>,
    /// Datasets simulated from each fitted model [default: 20]
    #[arg(long)]
    pub n_sim: Option<usize>,
    #[arg(long)]
    pub grid_n: Option<usize>,
}
