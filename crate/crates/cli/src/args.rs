use clap::{Args, Parser, Subcommand, ValueEnum};
use sped::fourier::{BenchmarkSetting, ErrorFamily, NamedKernel};

#[derive(Parser, Debug)]
#[command(name = "sped", version, about = "Smoothness-penalized deconvolution of contaminated samples")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the error-free density from a contaminated sample.
    Deconvolve(DeconvolveArgs),
    /// Tabulate the exact MISE of an estimator against its tuning parameter.
    MiseCurve(MiseCurveArgs),
    /// Smallest sample size matching an error-free reference MISE.
    EquivN(EquivNArgs),
    /// Choose α for a sample by iterating on the estimated MISE.
    Tune(TuneArgs),
    /// Monte Carlo integrated squared error for a benchmark setting.
    Simulate(SimulateArgs),
    /// Run the bound-verification suite.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorKind {
    Sped,
    Dke,
    Kde,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlphaRuleKind {
    Fixed,
    Normal,
    Cauchy,
    Laplace,
    Tuned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PilotKind {
    Ecf,
    Kde,
    Hist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// B-spline coefficients from a quadratic program.
    Spline,
    /// Direct inversion of the penalized spectrum.
    Fourier,
}

fn parse_family(s: &str) -> Result<ErrorFamily, String> {
    s.parse().map_err(|e: sped::fourier::FourierError| e.to_string())
}

fn parse_setting(s: &str) -> Result<BenchmarkSetting, String> {
    s.parse().map_err(|e: sped::fourier::FourierError| e.to_string())
}

fn parse_kernel(s: &str) -> Result<NamedKernel, String> {
    s.parse().map_err(|e: sped::fourier::FourierError| e.to_string())
}

#[derive(Args, Debug, Clone)]
pub struct ErrorArgs {
    /// Measurement error family.
    #[arg(long, default_value = "gaussian", value_parser = parse_family)]
    pub error: ErrorFamily,

    /// Scale of the error law (σ, Laplace scale, Cauchy scale or uniform half-width).
    #[arg(long, conflicts_with = "p")]
    pub error_scale: Option<f64>,

    /// Share of the observed variance due to error; 0.045 when no scale is given.
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct SettingArgs {
    /// Benchmark target density.
    #[arg(long, default_value = "i", value_parser = parse_setting)]
    pub target: BenchmarkSetting,

    /// Measurement error family.
    #[arg(long, default_value = "gaussian", value_parser = parse_family)]
    pub error: ErrorFamily,

    /// Share of the observed variance due to error.
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,

    /// Sample size.
    #[arg(long, default_value_t = 100)]
    pub n: u64,

    /// Penalty order of SPeD.
    #[arg(long, default_value_t = 2)]
    pub m: u32,
}

#[derive(Args, Debug)]
pub struct DeconvolveArgs {
    /// Sample file: one value per line, optional header "y".
    #[arg(long)]
    pub input: String,

    /// Output CSV (x,density); metadata goes to <output>.json.
    #[arg(long)]
    pub output: String,

    #[command(flatten)]
    pub error: ErrorArgs,

    #[arg(long, value_enum, default_value = "sped")]
    pub estimator: EstimatorKind,

    /// Fixed α, or the starting point of --alpha-rule tuned. Given alone it
    /// implies --alpha-rule fixed; without it the rule is tuned.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,

    #[arg(long, value_enum)]
    pub alpha_rule: Option<AlphaRuleKind>,

    /// Smoothness order of the target assumed by the rate rules.
    #[arg(long, default_value_t = 1)]
    pub k: u32,

    #[arg(long, default_value_t = 2)]
    pub m: u32,

    /// Number of B-spline basis functions.
    #[arg(long, default_value_t = 40)]
    pub q: usize,

    /// Estimation interval; defaults to the data range padded by four error spreads.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    pub interval: Option<Vec<f64>>,

    /// Project the spline coefficients onto densities.
    #[arg(long, value_enum, default_value = "on")]
    pub project: Switch,

    #[arg(long, value_enum, default_value = "spline")]
    pub method: Method,

    #[arg(long, value_enum, default_value = "ecf")]
    pub pilot: PilotKind,

    /// Kernel of a KDE pilot or of the dke/kde estimators.
    #[arg(long, default_value = "dke", value_parser = parse_kernel)]
    pub kernel: NamedKernel,

    /// Pilot bandwidth (KDE) or bin width (histogram); Silverman's rule by default.
    #[arg(long)]
    pub bandwidth: Option<f64>,

    /// Points of the output grid.
    #[arg(long, default_value_t = 512)]
    pub grid_points: usize,
}

#[derive(Args, Debug)]
pub struct MiseCurveArgs {
    #[arg(long)]
    pub output: String,

    #[command(flatten)]
    pub setting: SettingArgs,

    #[arg(long, value_enum, default_value = "sped")]
    pub estimator: EstimatorKind,

    /// Kernel for the dke and kde estimators.
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<NamedKernel>,

    /// Log-grid points over the tuning range.
    #[arg(long, default_value_t = 81)]
    pub points: usize,
}

#[derive(Args, Debug)]
pub struct EquivNArgs {
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    pub output: Option<String>,

    #[arg(long, value_delimiter = ',', default_value = "i", value_parser = parse_setting)]
    pub target: Vec<BenchmarkSetting>,

    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub p: Vec<f64>,

    #[arg(long, default_value = "gaussian", value_parser = parse_family)]
    pub error: ErrorFamily,

    #[arg(long, value_delimiter = ',', value_enum, default_value = "sped,dke")]
    pub estimator: Vec<EstimatorKind>,

    #[arg(long, value_delimiter = ',', default_value = "ef,dke", value_parser = parse_kernel)]
    pub ref_kernel: Vec<NamedKernel>,

    /// Sample size of the error-free reference.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub ref_n: u64,

    #[arg(long, default_value_t = 2)]
    pub m: u32,

    /// Kernel of the dke estimator.
    #[arg(long, default_value = "dke", value_parser = parse_kernel)]
    pub kernel: NamedKernel,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub input: String,

    /// Output JSON; stdout if omitted.
    #[arg(long)]
    pub output: Option<String>,

    #[command(flatten)]
    pub error: ErrorArgs,

    /// Starting α.
    #[arg(long, default_value_t = 1e-2, allow_negative_numbers = true)]
    pub alpha: f64,

    #[arg(long, default_value_t = 2)]
    pub m: u32,

    #[arg(long, default_value_t = 40)]
    pub q: usize,

    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    pub interval: Option<Vec<f64>>,

    #[arg(long, value_enum, default_value = "on")]
    pub project: Switch,

    #[arg(long, value_enum, default_value = "spline")]
    pub method: Method,

    /// Relative change in α that stops the iteration.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,

    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Output JSON; stdout if omitted.
    #[arg(long)]
    pub output: Option<String>,

    #[command(flatten)]
    pub setting: SettingArgs,

    #[arg(long, default_value_t = 100)]
    pub nsim: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,

    #[arg(long, value_enum)]
    pub alpha_rule: Option<AlphaRuleKind>,

    #[arg(long, default_value_t = 1)]
    pub k: u32,

    #[arg(long, value_enum, default_value = "fourier")]
    pub method: Method,

    #[arg(long, default_value_t = 40)]
    pub q: usize,

    #[arg(long, value_enum, default_value = "on")]
    pub project: Switch,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// JSON-lines report; stdout if omitted.
    #[arg(long)]
    pub output: Option<String>,

    /// Keep only reports whose name contains this text.
    #[arg(long)]
    pub filter: Option<String>,

    /// Shrinks the sup of the multiplier by half to exercise the suite.
    #[arg(long, hide = true)]
    pub inject_sup_bug: bool,
}
