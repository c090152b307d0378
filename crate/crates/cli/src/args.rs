use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvlmn_core::{ProductKind, TraceTerm};

#[derive(Debug, Parser)]
#[command(name = "mvlmn", version, about = "Simulate and verify CLTs for products of sample covariance matrices with the sample mean")]
pub struct Cli {
    /// Worker threads for replicate generation (0 uses every core). Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one Monte Carlo experiment and write samples, KDE, report and manifest.
    Simulate(SimulateArgs),
    /// Run a suite of numerical checks and print a JSON report.
    Verify(VerifyArgs),
    /// Reproduce the data behind one figure panel.
    Figure(FigureArgs),
    /// Print the log-density of a data matrix under truncated-normal mixing.
    Density(DensityArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProductArg {
    Cov,
    Precision,
}

impl From<ProductArg> for ProductKind {
    fn from(p: ProductArg) -> Self {
        match p {
            ProductArg::Cov => ProductKind::CovTimesMean,
            ProductArg::Precision => ProductKind::PrecisionTimesMean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NuArg {
    Tn,
    Gal,
}

impl NuArg {
    pub fn name(self) -> &'static str {
        match self {
            NuArg::Tn => "tn",
            NuArg::Gal => "gal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TraceTermArg {
    PerDimension,
    Frobenius,
}

impl From<TraceTermArg> for TraceTerm {
    fn from(t: TraceTermArg) -> Self {
        match t {
            TraceTermArg::PerDimension => TraceTerm::PerDimension,
            TraceTermArg::Frobenius => TraceTerm::Frobenius,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, required_unless_present = "from_manifest")]
    pub p: Option<usize>,
    #[arg(long, required_unless_present = "from_manifest")]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub q: usize,
    /// Concentration ratio; defaults to p/n.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub nreps: usize,
    #[arg(long, value_enum, default_value = "cov")]
    pub product: ProductArg,
    #[arg(long, value_enum, default_value = "tn")]
    pub nu: NuArg,
    /// Master seed; replicate i uses stream i of it.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Seed for the random μ, Σ and B.
    #[arg(long, default_value_t = 1)]
    pub model_seed: u64,
    /// Scaling of the c-term in the covariance-product variance.
    #[arg(long, value_enum, default_value = "per-dimension")]
    pub trace_term: TraceTermArg,
    /// Rerun the configuration recorded in a manifest.json.
    #[arg(long, conflicts_with_all = ["p", "n", "c"])]
    pub from_manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = mvlmn_core::checks::SUITES)]
    pub suite: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PanelArg {
    A,
    B,
    C,
    D,
}

impl PanelArg {
    pub fn label(self) -> &'static str {
        match self {
            PanelArg::A => "a",
            PanelArg::B => "b",
            PanelArg::C => "c",
            PanelArg::D => "d",
        }
    }
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub figure: u8,
    #[arg(long, value_enum)]
    pub panel: PanelArg,
    #[arg(long, default_value_t = 100_000)]
    pub nreps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub model_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    /// Model file (TOML, see docs/model-file.md).
    #[arg(long)]
    pub model: PathBuf,
    /// p×n data matrix as CSV, one row of Z per line, no header.
    #[arg(long)]
    pub data: PathBuf,
    /// Standard error target for orthant probabilities when q ≥ 2.
    #[arg(long, default_value_t = mvlmn_core::density::DEFAULT_ORTHANT_ACCURACY)]
    pub accuracy: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
