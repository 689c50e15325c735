use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::seeds::SeedList;

#[derive(Debug, Parser)]
#[command(
    name = "ciric-dp",
    version,
    about = "Abstract DP solvers, λ-policy iteration with randomization, and contraction certificates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a model with an oracle method and write a JSON report.
    Solve(SolveArgs),
    /// Run randomized λ-policy iteration over one or more seeds.
    Pir(PirArgs),
    /// Run a certification suite and write a JSON pass/fail report.
    Certify(CertifyArgs),
    /// Generate a seeded random model document.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveMethod {
    Vi,
    #[value(name = "pi_exact", alias = "pi-exact")]
    PiExact,
    Enumerate,
}

impl SolveMethod {
    pub fn name(self) -> &'static str {
        match self {
            SolveMethod::Vi => "vi",
            SolveMethod::PiExact => "pi_exact",
            SolveMethod::Enumerate => "enumerate",
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "vi")]
    pub method: SolveMethod,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iters: usize,
    /// Refuse enumeration above this many policies.
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: u128,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Classical,
    PowerL,
}

#[derive(Debug, Args)]
pub struct PirArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Constant branch probability p.
    #[arg(long, default_value_t = 0.5, conflicts_with = "p0")]
    pub p: f64,
    /// Geometric schedule p_k = max(p0·beta^k, p_min).
    #[arg(long, requires_all = ["beta", "p_min"])]
    pub p0: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub p_min: Option<f64>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed list such as `1..100` (inclusive) or `1,5,9`.
    #[arg(long)]
    pub seeds: Option<SeedList>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// V0 = V*_est + c·ν.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub v0_shift: f64,
    #[arg(long, value_enum, default_value = "classical")]
    pub convention: ConventionArg,
    #[arg(long, default_value_t = 1e-10)]
    pub truncation_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_terms: usize,
    /// Modulus for certificates; defaults to the model's contraction modulus.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Skip the FV0 < V0 check.
    #[arg(long)]
    pub no_enforce: bool,
    #[arg(long, default_value = "pir_out")]
    pub out_dir: PathBuf,
    /// Fill the wall_time_ns column (makes traces non-reproducible).
    #[arg(long)]
    pub record_timing: bool,
    /// Append the iterate V_k as columns v0..v{n-1}.
    #[arg(long)]
    pub values: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CertifyTarget {
    MdpCiric,
    Example1,
    LambdaOp,
    Bounds,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(value_enum)]
    pub target: CertifyTarget,
    /// Model file; the 20-state, 4-control, α=0.9, seed-1 generated model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// λ values for `lambda-op`.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 0.9])]
    pub lambda: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub states: usize,
    #[arg(long)]
    pub controls: usize,
    #[arg(long)]
    pub discount: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
