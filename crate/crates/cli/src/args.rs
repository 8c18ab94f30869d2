use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stochprof::io::Orientation;
use stochprof::Family;

/// Simulate, fit and interpret pooled single-cell expression data.
#[derive(Debug, Parser)]
#[command(name = "stochprof", version, allow_negative_numbers = true)]
pub struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, env = "STOCHPROF_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw pooled measurements from a mixture model.
    Simulate(SimulateArgs),
    /// Estimate model parameters from pooled measurements.
    Fit(FitArgs),
    /// Tabulate the density of pooled measurements.
    Density(DensityArgs),
    /// Infer the composition of every pool.
    Predict(PredictArgs),
    /// Test whether two lognormal populations are the same.
    Compare(CompareArgs),
    /// Run a simulation study.
    Simstudy(SimstudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ModelArg {
    #[value(name = "LN-LN", alias = "lnln")]
    LnLn,
    #[value(name = "rLN-LN", alias = "rlnln")]
    RlnLn,
    #[value(name = "EXP-LN", alias = "expln")]
    ExpLn,
}

impl From<ModelArg> for Family {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::LnLn => Family::LnLn,
            ModelArg::RlnLn => Family::RlnLn,
            ModelArg::ExpLn => Family::ExpLn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum OrientationArg {
    Columns,
    Rows,
}

impl From<OrientationArg> for Orientation {
    fn from(o: OrientationArg) -> Self {
        match o {
            OrientationArg::Columns => Orientation::GenesInColumns,
            OrientationArg::Rows => Orientation::GenesInRows,
        }
    }
}

/// Model parameters given on the command line.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ParamArgs {
    #[arg(long, value_enum, default_value = "LN-LN")]
    pub model: ModelArg,
    /// Number of populations, including the exponential one for EXP-LN.
    #[arg(long, default_value_t = 2)]
    pub populations: usize,
    /// Population fractions; the last may be omitted.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<f64>,
    /// Log-means, population by population, genes within each population.
    #[arg(long, value_delimiter = ',')]
    pub mu: Vec<f64>,
    /// One shared value (LN-LN) or one per lognormal population (rLN-LN).
    #[arg(long, value_delimiter = ',')]
    pub sigma: Vec<f64>,
    /// Exponential rates, one per gene (EXP-LN).
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Whitespace-separated expression matrix.
    #[arg(long)]
    pub data: PathBuf,
    /// Pool size, comma-separated list of sizes, or file with one size per line.
    #[arg(long)]
    pub pool_sizes: String,
    #[arg(long, value_enum, default_value = "columns")]
    pub orientation: OrientationArg,
    /// The first line holds names.
    #[arg(long)]
    pub header: bool,
    /// The first field of each line is a name.
    #[arg(long)]
    pub rownames: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub samples: usize,
    #[arg(long)]
    pub pool_sizes: String,
    #[arg(long, default_value_t = 1)]
    pub genes: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizerArgs {
    #[arg(long, default_value_t = 10)]
    pub loops: usize,
    #[arg(long, default_value_t = 1000)]
    pub grid_draws: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.05)]
    pub top_fraction: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Gene subsets fitted first, e.g. "1;1,2" (1-based, ';' between subsets).
    #[arg(long)]
    pub subgroups: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "LN-LN")]
    pub model: ModelArg,
    /// Population count; a list fits each and ranks them by BIC.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub populations: Vec<usize>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Output directory for the report, structured result and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DensityArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Pool size or list of sizes (mixture over the list).
    #[arg(long, default_value = "1")]
    pub pool_sizes: String,
    /// 1-based gene index.
    #[arg(long, default_value_t = 1)]
    pub gene: usize,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Structured fit result to take parameters from instead of flags.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// 1-based gene index.
    #[arg(long, default_value_t = 1)]
    pub gene: usize,
    /// Composition file written by `simulate`, for hit counts.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub mu_a: f64,
    #[arg(long)]
    pub sigma_a: f64,
    #[arg(long)]
    pub mu_b: f64,
    #[arg(long)]
    pub sigma_b: f64,
    /// Number of cells behind estimate A.
    #[arg(long)]
    pub count_a: usize,
    #[arg(long)]
    pub count_b: usize,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum StudyKind {
    PoolSize,
    Sensitivity,
    MisspecFixed,
    MisspecPoisson,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimstudyArgs {
    #[arg(long, value_enum)]
    pub study: StudyKind,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// Parameter sets to include (set1..set5).
    #[arg(long, value_delimiter = ',')]
    pub sets: Vec<String>,
    /// Pool settings, e.g. "1,10,mix:1/2/5/10".
    #[arg(long, value_delimiter = ',')]
    pub settings: Vec<String>,
    /// Pool sizes assumed by the fixed-offset misspecification study.
    #[arg(long, value_delimiter = ',')]
    pub assumed: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub true_pool_size: usize,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long)]
    pub out: PathBuf,
}
