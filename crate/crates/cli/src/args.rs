use std::path::PathBuf;

use ascmlab_core::panel::SampleEndRule;
use ascmlab_core::solver::LambdaRule;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Synthetic control and ridge-augmented synthetic control, end to end.
#[derive(Debug, Parser)]
#[command(name = "ascmlab", version)]
pub struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one specification: weights, gaps, balance, counterfactual, intervals.
    Fit(FitArgs),
    /// In-space or in-time placebo test.
    Placebo(PlaceboArgs),
    /// Leave-one-donor-out refits.
    Loo(FitArgs),
    /// All sixteen specifications with ATT, p-value and the MAD band.
    SpecGrid(FitArgs),
    /// Monte Carlo study on synthetic factor-model panels.
    Simulate(SimulateArgs),
    /// Every table and figure dataset in one directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Long-format outcome file (unit, date, deaths_pm, cases_pm, mobility, stringency).
    #[arg(long)]
    pub outcome: PathBuf,
    /// Static covariates (unit, hsp, age, hld).
    #[arg(long)]
    pub covariates: PathBuf,
    /// Treated unit; overrides the `treated` column.
    #[arg(long, requires = "treatment_date")]
    pub treated: Option<String>,
    /// First treated date (YYYY-MM-DD).
    #[arg(long, requires = "treated")]
    pub treatment_date: Option<NaiveDate>,
    /// Cumulative cases per million that define epidemic day 1.
    #[arg(long, default_value_t = 1.0)]
    pub align_threshold: f64,
    /// earliest-peak, mean-peak or fixed:N.
    #[arg(long, default_value = "mean-peak")]
    pub end_rule: SampleEndRule,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// Specification id, a0 to c5.
    #[arg(long, default_value = "c4")]
    pub spec: String,
    /// min or one-se.
    #[arg(long, default_value = "one-se")]
    pub lambda_rule: LambdaRule,
    /// Squared-weight dispersion penalty in the simplex problem.
    #[arg(long, default_value_t = 0.0)]
    pub zeta: f64,
    /// Standardize predictor rows across units before fitting.
    #[arg(long)]
    pub normalize: bool,
    /// Miscoverage level of the jackknife+ band.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlaceboMode {
    InSpace,
    InTime,
}

#[derive(Debug, Clone, Args)]
pub struct PlaceboArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, value_enum, default_value = "in-space")]
    pub mode: PlaceboMode,
    /// First day of the fictitious treatment (epidemic day); repeatable.
    /// Defaults to half, two thirds and three quarters of the pre-period.
    #[arg(long = "fake-day")]
    pub fake_days: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Study configuration (JSON). Without it the att-recovery study is run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Data-generating preset used when no config is given.
    #[arg(long, default_value = "att-recovery")]
    pub preset: String,
    /// Overrides the study's first seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Robustness specification shown next to the baseline.
    #[arg(long, default_value = "c5")]
    pub robustness_spec: String,
}
