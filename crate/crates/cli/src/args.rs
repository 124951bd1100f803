use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "stabsim",
    version,
    about = "Fast stability estimation for ensemble feature selectors"
)]
pub struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled dataset as CSV.
    Synth(SynthArgs),
    /// Simulated ensemble stability over a (p, m_ensemble) sweep.
    SimulateStability(SimulateArgs),
    /// Calibrate n_useful and p against a real (or ground-truth simulated) selector.
    Calibrate(CalibrateArgs),
    /// Closed-form vs Monte Carlo first-pick probability.
    TheoremCheck(TheoremArgs),
    /// Stability of the real ensemble computed directly (m_stability x m_ensemble runs).
    RealStability(RealStabilityArgs),
    /// Wall-clock timing of real vs simulated stability estimation.
    Bench(BenchArgs),
    /// Leave-one-out accuracy over an (n_target, n_tree) grid.
    NtargetScan(ScanArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeedArgs {
    /// Master seed of every random stream.
    #[arg(long, env = "STABSIM_SEED")]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SynthFlags {
    /// JSON synthetic-data config (see README).
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
    #[arg(long)]
    pub synth_n_sample: Option<usize>,
    #[arg(long)]
    pub synth_n_feature: Option<usize>,
    #[arg(long)]
    pub synth_n_informative: Option<usize>,
    #[arg(long)]
    pub synth_n_class: Option<usize>,
    #[arg(long)]
    pub synth_noise: Option<f64>,
    #[arg(long)]
    pub synth_discretize: Option<usize>,
}

impl SynthFlags {
    pub fn any(&self) -> bool {
        self.synth_config.is_some()
            || self.synth_n_sample.is_some()
            || self.synth_n_feature.is_some()
            || self.synth_n_informative.is_some()
            || self.synth_n_class.is_some()
            || self.synth_noise.is_some()
            || self.synth_discretize.is_some()
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct DataArgs {
    /// CSV dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Label column (name or 0-based index); defaults to the last column.
    #[arg(long)]
    pub label: Option<String>,
    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
    #[command(flatten)]
    pub synth: SynthFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 100)]
    pub n_tree: usize,
    #[arg(long)]
    pub mtry: Option<usize>,
    /// mtry as a fraction of the feature count; overrides --mtry.
    #[arg(long)]
    pub normalized_mtry: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub min_samples_split: usize,
    /// Row fraction each weak selector draws before fitting (1.0 = all rows).
    #[arg(long, default_value_t = 1.0)]
    pub subsample: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub synth: SynthFlags,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub seed: SeedArgs,
    #[arg(long)]
    pub n_feature: usize,
    #[arg(long)]
    pub n_target: usize,
    #[arg(long)]
    pub n_useful: usize,
    /// Comma-separated p values.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    )]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,30,40,50")]
    pub m_ensemble: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub m_stability: usize,
    /// CSV output (stdout when omitted).
    #[arg(long)]
    #[serde(skip)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Calibrate against a simulated selector with this n_useful instead of a dataset.
    #[arg(long, requires_all = ["ground_truth_p", "n_feature"])]
    pub ground_truth_n_useful: Option<usize>,
    #[arg(long)]
    pub ground_truth_p: Option<f64>,
    /// Feature count of the ground-truth simulator.
    #[arg(long)]
    pub n_feature: Option<usize>,
    #[arg(long)]
    pub n_target: usize,
    #[arg(long, default_value_t = 50)]
    pub m_ensemble: usize,
    #[arg(long, default_value_t = 30)]
    pub m_stability: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    )]
    pub p_grid: Vec<f64>,
    /// Ensemble size whose real stability p is matched against.
    #[arg(long, default_value_t = 1)]
    pub stability_ensemble_size: usize,
    /// Repetitions of the uniform threshold (mean/std are reported).
    #[arg(long, default_value_t = 1)]
    pub t_reps: usize,
    #[arg(long, default_value_t = 1)]
    pub fixed_point_iter: usize,
    #[arg(long)]
    pub fixed_point_slack: Option<usize>,
    /// Also run the bisection estimate of p with this stability tolerance.
    #[arg(long)]
    pub binary_search_tol: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub binary_search_iter: usize,
    /// Ensemble sizes of the final simulated stability curve.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,30,40,50")]
    pub curve: Vec<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TheoremArgs {
    #[command(flatten)]
    pub seed: SeedArgs,
    #[arg(long)]
    pub n_feature: usize,
    #[arg(long)]
    pub n_target: usize,
    #[arg(long)]
    pub n_useful: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RealStabilityArgs {
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long)]
    pub n_target: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub m_ensemble: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub m_stability: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long)]
    pub n_target: usize,
    /// n_useful of the simulated selector.
    #[arg(long)]
    pub n_useful: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,10,20,30,40,50")]
    pub m_ensemble: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub m_stability: usize,
    /// Which modes to time.
    #[arg(long, value_delimiter = ',', default_value = "real,simulated")]
    pub modes: Vec<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanArgs {
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, value_delimiter = ',')]
    pub n_target: Vec<usize>,
    /// Tree counts of the selecting forest; --n-tree sets the predictor's.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub selector_n_tree: Vec<usize>,
    /// Weak selectors in the selecting ensemble.
    #[arg(long, default_value_t = 5)]
    pub m_ensemble: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out_csv: Option<PathBuf>,
}
