//! Command-line arguments and the serialized run configuration.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use derivbound::symbols::{DerivativeFamily, MultiIndex};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "derivbound", version, about = "Sharp L^p constants for inequalities between partial derivatives")]
pub struct Cli {
    /// Master seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Run from a saved configuration instead of a subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub seed: u64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Hypotheses of a family: orders, parity set, normalization, convexity.
    CheckFamily(FamilyArgs),
    /// Lower bound for the best constant by gradient ascent.
    Estimate(EstimateArgs),
    /// Eigen-witness pair built from a square-wave polynomial.
    Witness(WitnessArgs),
    /// Certified lower bound from the stacked witness construction.
    Pipeline(PipelineArgs),
    /// Paley-Walsh martingale transform search.
    Martingale(MartingaleArgs),
    /// Transference limit sweeps.
    Transfer(TransferArgs),
    /// Derivative ratio for catalog functions on R^2.
    PdeCheck(PdeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckFamily(_) => "check-family",
            Command::Estimate(_) => "estimate",
            Command::Witness(_) => "witness",
            Command::Pipeline(_) => "pipeline",
            Command::Martingale(_) => "martingale",
            Command::Transfer(_) => "transfer",
            Command::PdeCheck(_) => "pde-check",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FamilyArgs {
    /// Multi-index of the left-hand side, e.g. 1,1.
    #[arg(long)]
    pub beta: MultiIndex,
    /// Multi-index of a right-hand term; repeat for each term.
    #[arg(long = "alpha", required = true)]
    pub alphas: Vec<MultiIndex>,
    /// Exponent in (1, inf).
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
}

impl FamilyArgs {
    pub fn family(&self) -> Result<DerivativeFamily, CliError> {
        Ok(DerivativeFamily::new(self.beta.clone(), self.alphas.clone(), self.p)?)
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub family: FamilyArgs,
    /// Points per axis.
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 4)]
    pub oversample: usize,
    /// Relative smoothing of |g|^(p-2) for p < 2.
    #[arg(long, default_value_t = 1e-8)]
    pub eps_g: f64,
    /// Field file with a witness from a coarser grid.
    #[arg(long)]
    pub warm_from: Option<PathBuf>,
    /// Extra copy of the trace CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WitnessArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub family: FamilyArgs,
    /// Square-wave truncation degree (odd).
    #[arg(long, default_value_t = 63)]
    pub degree: u32,
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub family: FamilyArgs,
    /// Number of stacked layers.
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    #[arg(long, default_value_t = 63)]
    pub degree: u32,
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    #[arg(long, default_value_t = 1)]
    pub oversample: usize,
    /// Ratio evaluations for the Walsh witness search.
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
    /// Fixed layer signs, e.g. 1,-1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sigma: Option<Vec<i8>>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MartingaleArgs {
    /// Number of martingale steps.
    #[arg(long, default_value_t = 8)]
    pub r: usize,
    #[arg(long, default_value_t = 4.0)]
    pub p: f64,
    #[arg(long, default_value_t = 10_000)]
    pub budget: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lemma {
    #[value(name = "22")]
    #[serde(rename = "22")]
    Scaling,
    #[value(name = "23")]
    #[serde(rename = "23")]
    Poisson,
    Pairing,
    Dyadic,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransferArgs {
    #[arg(long, value_enum)]
    pub lemma: Lemma,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Sweep starts at eps = 2^-eps_from.
    #[arg(long, default_value_t = 3)]
    pub eps_from: i32,
    /// Sweep ends at eps = 2^-eps_to.
    #[arg(long, default_value_t = 9)]
    pub eps_to: i32,
    /// Dimension for the scaling and Poisson sweeps.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Square-wave degree of the periodic factor in the scaling sweep.
    #[arg(long, default_value_t = 5)]
    pub degree: u32,
    /// Symbol multi-index for the pairing and dyadic checks.
    #[arg(long, default_value = "1,1")]
    pub beta: MultiIndex,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,1")]
    pub k: Vec<i64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,1")]
    pub l: Vec<i64>,
    /// Dyadic block index.
    #[arg(long, default_value_t = 0)]
    pub block: u32,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PdeArgs {
    /// Catalog function; all of them when omitted.
    #[arg(long)]
    pub function: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Box is [-L, L)^2.
    #[arg(long, default_value_t = 8.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}
