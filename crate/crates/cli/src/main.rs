//! `mixclust`: fit, select, rank, network and simulate from the command line.
//!
//! Exit status is 0 on success, 1 for usage or input errors and 2 when the
//! computation itself fails.

mod commands;
mod output;
mod settings;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Compute(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 1,
            CliError::Compute(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Compute(m) => f.write_str(m),
        }
    }
}

impl From<mixclust_core::Error> for CliError {
    fn from(e: mixclust_core::Error) -> Self {
        if e.is_computation() {
            CliError::Compute(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mixclust",
    version,
    about = "Mixture-model clustering of sparse mixed numeric/categorical measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a K-cluster model with random restarts
    Fit(FitArgs),
    /// Compare K values by held-out likelihood and must-link agreement
    Select(SelectArgs),
    /// Rank features by mutual information with the cluster labels
    Rank(RankArgs),
    /// Build, lay out and export the distance-threshold network
    Network(NetworkArgs),
    /// Generate a synthetic corpus with known clusters
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Corpus CSV (header `id,name:num,name:cat,meta:name,...`)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Random seed; chosen and printed when absent
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: mixclust-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Plain-text `key = value` file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Random restarts per fit [default: 500]
    #[arg(long)]
    pub restarts: Option<usize>,
    /// EM iteration cap per restart [default: 1000]
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// Relative objective change that stops EM [default: 1e-8]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Gamma prior shape on precisions, > 1 [default: 2]
    #[arg(long)]
    pub a: Option<f64>,
    /// Gamma prior rate on precisions, > 0 [default: 0.1]
    #[arg(long)]
    pub b: Option<f64>,
    /// Dirichlet pseudo-count on category probabilities [default: 0.01]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Standardize numeric features before fitting
    #[arg(long)]
    pub zscore: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of clusters
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    /// Smallest K [default: 2]
    #[arg(long)]
    pub kmin: Option<usize>,
    /// Largest K [default: 6]
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Explicit K list such as `2,3,5`; overrides --kmin/--kmax
    #[arg(long)]
    pub ks: Option<String>,
    /// Must-link pairs CSV (`id_a,id_b`)
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Cross-validation folds [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Restarts per cross-validation fit [default: 50]
    #[arg(long = "cv-restarts")]
    pub cv_restarts: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of clusters
    #[arg(long)]
    pub k: Option<usize>,
    /// Folds; 1 fits once on all objects [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Equal-frequency bins for numeric features [default: 5]
    #[arg(long)]
    pub bins: Option<usize>,
    /// Objects whose labels enter the MI: `training` or `all` [default: training]
    #[arg(long)]
    pub assign: Option<String>,
    /// Count a missing cell as one more category
    #[arg(long = "missing-as-category")]
    pub missing_as_category: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct NetworkArgs {
    #[command(flatten)]
    pub common: Common,
    /// Connect objects whose distance is strictly below this [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Cluster labels from a previous `fit` (assignments.csv)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Fit this many clusters for node colours when --labels is absent
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated export formats: json, dot, svg [default: json]
    #[arg(long)]
    pub format: Option<String>,
    /// Layout iterations [default: 500]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Require this many features observed in both objects for an edge [default: 0]
    #[arg(long = "min-shared-features")]
    pub min_shared_features: Option<u32>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Built-in generator settings: `reference` (alias `paper-shape`)
    #[arg(long)]
    pub preset: Option<String>,
    /// Generator settings as JSON
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Missingness pattern override: `mcar` or `fragment`
    #[arg(long)]
    pub missingness: Option<String>,
    /// Sample this many must-link pairs from the true clusters [default: 0]
    #[arg(long = "oracle-pairs")]
    pub oracle_pairs: Option<usize>,
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Err(CliError::Usage(String::new()))
            } else {
                Ok(())
            };
        }
    };
    match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Select(args) => commands::select(args),
        Command::Rank(args) => commands::rank(args),
        Command::Network(args) => commands::network(args),
        Command::Simulate(args) => commands::simulate(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.code())
        }
    }
}
