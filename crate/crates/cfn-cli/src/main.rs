//! `cfn`: simulate, fit and probe the likelihood landscape of CFN trees.
//!
//! Every experiment subcommand writes `<command>.csv` and `<command>.json`
//! into `--out`. Exit codes: 0 success, 2 configuration error, 3 a `--check`
//! gate failed, 1 anything else.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::CliError;

#[derive(Parser, Debug)]
#[command(name = "cfn", version = report::VERSION, about = "CFN tree likelihood experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Simulate leaf configurations from θ*.
    Sample(SampleArgs),
    /// Average log-likelihood and gradient of a sample file.
    Loglik(LoglikArgs),
    /// Maximum-likelihood fit by coordinate or projected gradient ascent.
    Fit(FitArgs),
    /// Expected Hessian at θ̂ with Gershgorin disks and eigenvalues.
    Hessian(HessianArgs),
    /// Scaling of the expected Hessian diagonal with δ.
    LandscapeDiag(DiagArgs),
    /// Off-diagonal decay with edge distance and concavity of the expected Hessian.
    LandscapeOffdiag(OffDiagArgs),
    /// Good / moderate / severe reconstruction frequencies at one vertex.
    ReconTiers(TierArgs),
    /// Distribution of the four-term W blocks for one edge pair.
    Wterms(WTermsArgs),
    /// The quartet sample with two boundary maximizers.
    Steel(SteelArgs),
    /// Fast subset of the acceptance checks.
    Selftest(SelftestArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Exact,
    Mc,
}

/// Where θ̂ comes from: θ* itself, or an independent draw from the estimate box.
#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PointArg {
    Truth,
    Drawn,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    /// Coordinate ascent with exact one-dimensional maximization.
    Ca,
    /// Projected gradient ascent with a fixed step.
    Pga,
}

#[derive(Args, Debug, Clone, Serialize)]
struct TreeArgs {
    /// Tree file. Edge values (`theta=`, `p=` or `len=`) on every edge fix θ*.
    #[arg(long, conflicts_with = "builtin")]
    tree: Option<PathBuf>,
    /// Tree file format: edge-list or newick.
    #[arg(long, default_value = "edge-list")]
    format: String,
    /// Generated tree: quartet, caterpillar:N, spine-of-cherries:K, planted-complete:D or random:N.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BoxArgs {
    /// Regime scale δ; a comma-separated list where the command sweeps δ.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Truth box p* ∈ [c_p δ, C_p δ]: lower constant.
    #[arg(long, default_value_t = 1.0)]
    c_p: f64,
    /// Truth box upper constant.
    #[arg(long, default_value_t = 2.0)]
    c_p_max: f64,
    /// Estimate box p̂ ∈ [ĉ δ, Ĉ δ]: lower constant.
    #[arg(long, default_value_t = 0.5)]
    c_hat: f64,
    /// Estimate box upper constant.
    #[arg(long, default_value_t = 4.0)]
    c_hat_max: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the CSV and JSON reports.
    #[arg(long, default_value = "cfn-out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Apply the acceptance tolerances and exit 3 if any check fails.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug, Serialize)]
struct SampleArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    rbox: BoxArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Number of samples.
    #[arg(long, default_value_t = 1000)]
    m: usize,
}

#[derive(Args, Debug, Serialize)]
struct LoglikArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    rbox: BoxArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Sample file in the text (`m n seed` header) or CSV form.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_enum, default_value = "truth")]
    at: PointArg,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    rbox: BoxArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Fit to this sample file instead of simulated or population data.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Without `--samples`: exact population objective, or `--m` simulated samples.
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long, value_enum, default_value = "ca")]
    method: MethodArg,
    /// Starting point.
    #[arg(long, value_enum, default_value = "drawn")]
    start: PointArg,
    /// Maximum sweeps (coordinate ascent) or iterations (projected gradient).
    #[arg(long, default_value_t = 200)]
    sweeps: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Projected gradient step; defaults to δ/2.
    #[arg(long)]
    step: Option<f64>,
    /// Allow negative θ (anti-ferromagnetic edges).
    #[arg(long)]
    widen: bool,
}

#[derive(Args, Debug, Serialize)]
struct HessianArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    rbox: BoxArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, value_enum, default_value = "truth")]
    at: PointArg,
    /// Also compare the analytic gradient and Hessian with finite differences
    /// on simulated samples; exit 3 if they disagree.
    #[arg(long)]
    check_fd: bool,
}

#[derive(Args, Debug, Serialize)]
struct DiagArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    rbox: BoxArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, value_enum, default_value = "drawn")]
    at: PointArg,
}

#[derive(Args, Debug, Serialize)]
struct OffDiagArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    rbox: BoxArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, value_enum, default_value = "truth")]
    at: PointArg,
}

#[derive(Args, Debug, Serialize)]
struct TierArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    rbox: BoxArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    /// Internal vertex whose magnetization is classified.
    #[arg(long, default_value_t = 0)]
    node: usize,
    /// Neighbor of `--node` on the side away from the subtree.
    #[arg(long, default_value_t = 1)]
    parent: usize,
    /// Good tier: σZ ≥ 1 − K_good δ².
    #[arg(long, default_value_t = 10.0)]
    k_good: f64,
    /// Severe tier: σZ ≤ −c_severe.
    #[arg(long, default_value_t = 0.5)]
    c_severe: f64,
    /// Multiplier on K_good δ² for the auxiliary moderate-band count.
    #[arg(long, default_value_t = 1.0)]
    moderate_multiplier: f64,
    #[arg(long, value_enum, default_value = "truth")]
    at: PointArg,
}

#[derive(Args, Debug, Serialize)]
struct WTermsArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    rbox: BoxArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    /// First edge id; defaults to an edge pair at maximal distance.
    #[arg(long, requires = "edge_f")]
    edge_e: Option<usize>,
    #[arg(long, requires = "edge_e")]
    edge_f: Option<usize>,
    /// Grid points for the adversarial sup before golden-section refinement.
    #[arg(long, default_value_t = 2001)]
    grid_points: usize,
    /// κ in the diagnostic tail band P(W > κ/δ).
    #[arg(long, default_value_t = 0.1)]
    tail_constant: f64,
}

#[derive(Args, Debug, Serialize)]
struct SteelArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Grid spacing for the search over [0, 1]^5.
    #[arg(long, default_value_t = 0.05)]
    grid_step: f64,
}

#[derive(Args, Debug, Serialize)]
struct SelftestArgs {
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<cfn_core::CfnError> for CliError {
    fn from(e: cfn_core::CfnError) -> Self {
        CliError::Core(e)
    }
}
