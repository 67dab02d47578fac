//! Characteristic functions, pilot-estimate transforms and quadrature-based
//! Fourier inversion.
//!
//! Convention used everywhere in the crate: `f̃(ω) = ∫ e^{-iωx} f(x) dx` with
//! inversion `f(x) = (2π)⁻¹ ∫ e^{iωx} f̃(ω) dω`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Largest imaginary residue tolerated after inverting a Hermitian spectrum.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

/// Relative size of the spectrum at `±omega_max` above which a rule is
/// considered truncated.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

const GL_ORDER: usize = 8;
const MAX_NODES: usize = 1 << 20;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FourierError {
    #[error("spectrum is not Hermitian: |S(-{omega}) - conj S({omega})| = {gap:e}")]
    NonHermitianSpectrum { omega: f64, gap: f64 },

    #[error("spectrum not negligible at the truncation point: |S(±{omega_max})| = {edge:e} vs peak {peak:e}")]
    TailTooFat { omega_max: f64, edge: f64, peak: f64 },

    #[error("quadrature resolution {0} is below the floor of 16")]
    BadResolution(usize),

    #[error("imaginary residue {0:e} after inversion exceeds tolerance")]
    ImaginaryResidue(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl FourierError {
    pub fn name(&self) -> &'static str {
        match self {
            FourierError::NonHermitianSpectrum { .. } => "NonHermitianSpectrum",
            FourierError::TailTooFat { .. } => "TailTooFat",
            FourierError::BadResolution(_) => "BadResolution",
            FourierError::ImaginaryResidue(_) => "NonHermitianSpectrum",
            FourierError::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64, FourierError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(FourierError::InvalidParameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

/// `sin(t)/t` with the removable singularity filled in.
pub fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-4 {
        let t2 = t * t;
        1.0 - t2 / 6.0 + t2 * t2 / 120.0
    } else {
        t.sin() / t
    }
}

/// Anything with a Fourier transform under the crate convention.
pub trait Spectrum: Sync {
    fn ft(&self, omega: f64) -> Complex64;
}

impl<F> Spectrum for F
where
    F: Fn(f64) -> Complex64 + Sync,
{
    fn ft(&self, omega: f64) -> Complex64 {
        self(omega)
    }
}

// ---------------------------------------------------------------------------
// Error densities
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFamily {
    Gaussian,
    Laplace,
    Cauchy,
    Uniform,
}

impl FromStr for ErrorFamily {
    type Err = FourierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(ErrorFamily::Gaussian),
            "laplace" => Ok(ErrorFamily::Laplace),
            "cauchy" => Ok(ErrorFamily::Cauchy),
            "uniform" => Ok(ErrorFamily::Uniform),
            other => Err(FourierError::InvalidParameter(format!("unknown error family '{other}'"))),
        }
    }
}

impl fmt::Display for ErrorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorFamily::Gaussian => "gaussian",
            ErrorFamily::Laplace => "laplace",
            ErrorFamily::Cauchy => "cauchy",
            ErrorFamily::Uniform => "uniform",
        };
        f.write_str(s)
    }
}

/// The known, symmetric measurement-error density `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorModel {
    Gaussian { sigma: f64 },
    Laplace { scale: f64 },
    Cauchy { scale: f64 },
    Uniform { half_width: f64 },
}

impl ErrorModel {
    pub fn gaussian(sigma: f64) -> Result<Self, FourierError> {
        Ok(ErrorModel::Gaussian { sigma: positive("sigma", sigma)? })
    }

    pub fn laplace(scale: f64) -> Result<Self, FourierError> {
        Ok(ErrorModel::Laplace { scale: positive("scale", scale)? })
    }

    pub fn cauchy(scale: f64) -> Result<Self, FourierError> {
        Ok(ErrorModel::Cauchy { scale: positive("scale", scale)? })
    }

    pub fn uniform(half_width: f64) -> Result<Self, FourierError> {
        Ok(ErrorModel::Uniform { half_width: positive("half_width", half_width)? })
    }

    /// Builds a member of `family` by its scale parameter.
    pub fn from_scale(family: ErrorFamily, scale: f64) -> Result<Self, FourierError> {
        match family {
            ErrorFamily::Gaussian => Self::gaussian(scale),
            ErrorFamily::Laplace => Self::laplace(scale),
            ErrorFamily::Cauchy => Self::cauchy(scale),
            ErrorFamily::Uniform => Self::uniform(scale),
        }
    }

    /// Builds a member of `family` with the given variance. Cauchy has none.
    pub fn with_variance(family: ErrorFamily, variance: f64) -> Result<Self, FourierError> {
        let v = positive("variance", variance)?;
        match family {
            ErrorFamily::Gaussian => Self::gaussian(v.sqrt()),
            ErrorFamily::Laplace => Self::laplace((v / 2.0).sqrt()),
            ErrorFamily::Uniform => Self::uniform((3.0 * v).sqrt()),
            ErrorFamily::Cauchy => Err(FourierError::InvalidParameter(
                "a Cauchy error has no variance to calibrate against".into(),
            )),
        }
    }

    /// Error law whose variance is the fraction `p` of the contaminated
    /// variance, given the target variance: `Var(E) = p/(1-p) Var(X)`.
    pub fn calibrated(family: ErrorFamily, p: f64, target_variance: f64) -> Result<Option<Self>, FourierError> {
        if !(0.0..1.0).contains(&p) {
            return Err(FourierError::InvalidParameter(format!("error proportion p must lie in [0,1), got {p}")));
        }
        if p == 0.0 {
            return Ok(None);
        }
        Self::with_variance(family, p / (1.0 - p) * target_variance).map(Some)
    }

    pub fn family(&self) -> ErrorFamily {
        match self {
            ErrorModel::Gaussian { .. } => ErrorFamily::Gaussian,
            ErrorModel::Laplace { .. } => ErrorFamily::Laplace,
            ErrorModel::Cauchy { .. } => ErrorFamily::Cauchy,
            ErrorModel::Uniform { .. } => ErrorFamily::Uniform,
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            ErrorModel::Gaussian { sigma } => sigma,
            ErrorModel::Laplace { scale } | ErrorModel::Cauchy { scale } => scale,
            ErrorModel::Uniform { half_width } => half_width,
        }
    }

    /// `g̃(ω)`; real and even for every supported family.
    pub fn cf(&self, omega: f64) -> f64 {
        match *self {
            ErrorModel::Gaussian { sigma } => (-0.5 * sigma * sigma * omega * omega).exp(),
            ErrorModel::Laplace { scale } => 1.0 / (1.0 + scale * scale * omega * omega),
            ErrorModel::Cauchy { scale } => (-scale * omega.abs()).exp(),
            ErrorModel::Uniform { half_width } => sinc(half_width * omega),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            ErrorModel::Gaussian { sigma } => {
                (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
            }
            ErrorModel::Laplace { scale } => (-x.abs() / scale).exp() / (2.0 * scale),
            ErrorModel::Cauchy { scale } => scale / (PI * (scale * scale + x * x)),
            ErrorModel::Uniform { half_width } => {
                if x.abs() <= half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
        }
    }

    pub fn variance(&self) -> Option<f64> {
        match *self {
            ErrorModel::Gaussian { sigma } => Some(sigma * sigma),
            ErrorModel::Laplace { scale } => Some(2.0 * scale * scale),
            ErrorModel::Cauchy { .. } => None,
            ErrorModel::Uniform { half_width } => Some(half_width * half_width / 3.0),
        }
    }

    /// A spread measure usable for padding intervals: the standard deviation,
    /// or the scale for Cauchy.
    pub fn spread(&self) -> f64 {
        self.variance().map(f64::sqrt).unwrap_or_else(|| self.scale())
    }

    /// Smallest positive zero of `g̃`, if any.
    pub fn first_cf_zero(&self) -> Option<f64> {
        match *self {
            ErrorModel::Uniform { half_width } => Some(PI / half_width),
            _ => None,
        }
    }
}

impl Spectrum for ErrorModel {
    fn ft(&self, omega: f64) -> Complex64 {
        Complex64::new(self.cf(omega), 0.0)
    }
}

// ---------------------------------------------------------------------------
// Target densities
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaComponent {
    pub weight: f64,
    pub shape: f64,
    pub rate: f64,
}

/// The four benchmark targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkSetting {
    I,
    II,
    III,
    IV,
}

impl BenchmarkSetting {
    pub const ALL: [BenchmarkSetting; 4] =
        [BenchmarkSetting::I, BenchmarkSetting::II, BenchmarkSetting::III, BenchmarkSetting::IV];

    pub fn target(self) -> TargetDensity {
        match self {
            BenchmarkSetting::I => TargetDensity::StdNormal,
            BenchmarkSetting::II => TargetDensity::NormalMixture(vec![
                NormalComponent { weight: 2.0 / 3.0, mean: 0.0, sd: 1.0 },
                NormalComponent { weight: 1.0 / 3.0, mean: 0.0, sd: 0.2 },
            ]),
            BenchmarkSetting::III => TargetDensity::Gamma { shape: 4.0, rate: 1.0 },
            BenchmarkSetting::IV => TargetDensity::GammaMixture(vec![
                GammaComponent { weight: 0.4, shape: 5.0, rate: 1.0 },
                GammaComponent { weight: 0.6, shape: 13.0, rate: 1.0 },
            ]),
        }
    }
}

impl FromStr for BenchmarkSetting {
    type Err = FourierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(BenchmarkSetting::I),
            "ii" | "2" => Ok(BenchmarkSetting::II),
            "iii" | "3" => Ok(BenchmarkSetting::III),
            "iv" | "4" => Ok(BenchmarkSetting::IV),
            other => Err(FourierError::InvalidParameter(format!("unknown setting '{other}'"))),
        }
    }
}

impl fmt::Display for BenchmarkSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BenchmarkSetting::I => "i",
            BenchmarkSetting::II => "ii",
            BenchmarkSetting::III => "iii",
            BenchmarkSetting::IV => "iv",
        };
        f.write_str(s)
    }
}

/// The density `f` of the unobserved variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum TargetDensity {
    StdNormal,
    NormalMixture(Vec<NormalComponent>),
    Gamma { shape: f64, rate: f64 },
    GammaMixture(Vec<GammaComponent>),
    /// Centred normal with the given variance.
    NormalVarianceCase { variance: f64 },
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    (-0.5 * ((x - mean) / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt())
}

fn gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return match shape {
            s if s < 1.0 => f64::INFINITY,
            s if s == 1.0 => rate,
            _ => 0.0,
        };
    }
    (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp()
}

fn gamma_cf(omega: f64, shape: f64, rate: f64) -> Complex64 {
    // Principal log of 1 + iω/β never crosses the branch cut.
    (-shape * Complex64::new(1.0, omega / rate).ln()).exp()
}

fn check_weights<I: Iterator<Item = f64>>(weights: I) -> Result<(), FourierError> {
    let mut sum = 0.0;
    for w in weights {
        if !(w > 0.0 && w <= 1.0) {
            return Err(FourierError::InvalidParameter(format!("mixture weight {w} outside (0,1]")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(FourierError::InvalidParameter(format!("mixture weights sum to {sum}, not 1")));
    }
    Ok(())
}

impl TargetDensity {
    pub fn validate(&self) -> Result<(), FourierError> {
        match self {
            TargetDensity::StdNormal => Ok(()),
            TargetDensity::NormalMixture(cs) => {
                if cs.is_empty() {
                    return Err(FourierError::InvalidParameter("empty normal mixture".into()));
                }
                check_weights(cs.iter().map(|c| c.weight))?;
                for c in cs {
                    positive("sd", c.sd)?;
                    if !c.mean.is_finite() {
                        return Err(FourierError::InvalidParameter("non-finite mean".into()));
                    }
                }
                Ok(())
            }
            TargetDensity::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate).map(|_| ())
            }
            TargetDensity::GammaMixture(cs) => {
                if cs.is_empty() {
                    return Err(FourierError::InvalidParameter("empty gamma mixture".into()));
                }
                check_weights(cs.iter().map(|c| c.weight))?;
                for c in cs {
                    positive("shape", c.shape)?;
                    positive("rate", c.rate)?;
                }
                Ok(())
            }
            TargetDensity::NormalVarianceCase { variance } => positive("variance", *variance).map(|_| ()),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            TargetDensity::StdNormal => normal_pdf(x, 0.0, 1.0),
            TargetDensity::NormalMixture(cs) => cs.iter().map(|c| c.weight * normal_pdf(x, c.mean, c.sd)).sum(),
            TargetDensity::Gamma { shape, rate } => gamma_pdf(x, *shape, *rate),
            TargetDensity::GammaMixture(cs) => cs.iter().map(|c| c.weight * gamma_pdf(x, c.shape, c.rate)).sum(),
            TargetDensity::NormalVarianceCase { variance } => normal_pdf(x, 0.0, variance.sqrt()),
        }
    }

    /// `f̃(ω)`.
    pub fn cf(&self, omega: f64) -> Complex64 {
        match self {
            TargetDensity::StdNormal => Complex64::new((-0.5 * omega * omega).exp(), 0.0),
            TargetDensity::NormalMixture(cs) => cs
                .iter()
                .map(|c| {
                    let mag = (-0.5 * c.sd * c.sd * omega * omega).exp();
                    c.weight * Complex64::from_polar(mag, -omega * c.mean)
                })
                .sum(),
            TargetDensity::Gamma { shape, rate } => gamma_cf(omega, *shape, *rate),
            TargetDensity::GammaMixture(cs) => {
                cs.iter().map(|c| c.weight * gamma_cf(omega, c.shape, c.rate)).sum()
            }
            TargetDensity::NormalVarianceCase { variance } => {
                Complex64::new((-0.5 * variance * omega * omega).exp(), 0.0)
            }
        }
    }

    /// `|f̃(ω)|²`, in closed form where one exists.
    pub fn cf_abs_sq(&self, omega: f64) -> f64 {
        match self {
            TargetDensity::StdNormal => (-omega * omega).exp(),
            TargetDensity::Gamma { shape, rate } => (1.0 + (omega / rate).powi(2)).powf(-shape),
            TargetDensity::NormalVarianceCase { variance } => (-variance * omega * omega).exp(),
            _ => self.cf(omega).norm_sqr(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            TargetDensity::StdNormal | TargetDensity::NormalVarianceCase { .. } => 0.0,
            TargetDensity::NormalMixture(cs) => cs.iter().map(|c| c.weight * c.mean).sum(),
            TargetDensity::Gamma { shape, rate } => shape / rate,
            TargetDensity::GammaMixture(cs) => cs.iter().map(|c| c.weight * c.shape / c.rate).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        match self {
            TargetDensity::StdNormal => 1.0,
            TargetDensity::NormalVarianceCase { variance } => *variance,
            TargetDensity::NormalMixture(cs) => {
                cs.iter().map(|c| c.weight * (c.sd * c.sd + c.mean * c.mean)).sum::<f64>() - mean * mean
            }
            TargetDensity::Gamma { shape, rate } => shape / (rate * rate),
            TargetDensity::GammaMixture(cs) => {
                cs.iter()
                    .map(|c| {
                        let m = c.shape / c.rate;
                        c.weight * (c.shape / (c.rate * c.rate) + m * m)
                    })
                    .sum::<f64>()
                    - mean * mean
            }
        }
    }

    /// An interval outside which the density is negligible (< ~1e-12).
    pub fn effective_support(&self) -> (f64, f64) {
        match self {
            TargetDensity::Gamma { .. } | TargetDensity::GammaMixture(_) => {
                let sd = self.variance().sqrt();
                (0.0, self.mean() + 14.0 * sd)
            }
            _ => {
                let (lo, hi) = match self {
                    TargetDensity::NormalMixture(cs) => cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                        (lo.min(c.mean - 8.0 * c.sd), hi.max(c.mean + 8.0 * c.sd))
                    }),
                    _ => {
                        let sd = self.variance().sqrt();
                        (-8.0 * sd, 8.0 * sd)
                    }
                };
                (lo, hi)
            }
        }
    }
}

impl Spectrum for TargetDensity {
    fn ft(&self, omega: f64) -> Complex64 {
        self.cf(omega)
    }
}

// ---------------------------------------------------------------------------
// Kernels and pilot estimates
// ---------------------------------------------------------------------------

/// A user-supplied kernel Fourier transform.
#[derive(Clone)]
pub struct CustomKernel {
    pub name: String,
    pub ft: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Half-width of the support of the transform, when band-limited.
    pub band: Option<f64>,
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel").field("name", &self.name).field("band", &self.band).finish()
    }
}

/// Kernels identified by their Fourier transform `κ`.
#[derive(Clone, Debug)]
pub enum NamedKernel {
    /// `1{|ω|<1}(1-ω²)³`.
    DkeDefault,
    /// `(1+ω⁴)⁻¹`, a fourth-order kernel.
    ErrorFree,
    /// `1{|ω|≤2}(1-|ω|/2)`, transform of `(1/π)(sin x / x)²`.
    SincSq,
    Custom(CustomKernel),
}

impl NamedKernel {
    pub fn ft(&self, t: f64) -> f64 {
        match self {
            NamedKernel::DkeDefault => {
                if t.abs() < 1.0 {
                    (1.0 - t * t).powi(3)
                } else {
                    0.0
                }
            }
            NamedKernel::ErrorFree => 1.0 / (1.0 + t.powi(4)),
            NamedKernel::SincSq => {
                if t.abs() <= 2.0 {
                    1.0 - t.abs() / 2.0
                } else {
                    0.0
                }
            }
            NamedKernel::Custom(k) => (k.ft)(t),
        }
    }

    pub fn band(&self) -> Option<f64> {
        match self {
            NamedKernel::DkeDefault => Some(1.0),
            NamedKernel::ErrorFree => None,
            NamedKernel::SincSq => Some(2.0),
            NamedKernel::Custom(k) => k.band,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            NamedKernel::DkeDefault => "dke",
            NamedKernel::ErrorFree => "ef",
            NamedKernel::SincSq => "sinc2",
            NamedKernel::Custom(k) => &k.name,
        }
    }
}

impl FromStr for NamedKernel {
    type Err = FourierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dke" | "dke_default" => Ok(NamedKernel::DkeDefault),
            "ef" | "error_free" => Ok(NamedKernel::ErrorFree),
            "sinc2" | "sincsq" | "sinc_sq" => Ok(NamedKernel::SincSq),
            other => Err(FourierError::InvalidParameter(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Data-side density estimate `h_n` of the contaminated density.
#[derive(Clone, Debug)]
pub enum PilotEstimate {
    EmpiricalCf { sample: Vec<f64> },
    Kde { sample: Vec<f64>, kernel: NamedKernel, bandwidth: f64 },
    Histogram { edges: Vec<f64>, counts: Vec<u64> },
}

fn check_sample(sample: &[f64]) -> Result<(), FourierError> {
    if sample.is_empty() {
        return Err(FourierError::InvalidParameter("empty sample".into()));
    }
    if sample.iter().any(|y| !y.is_finite()) {
        return Err(FourierError::InvalidParameter("sample contains non-finite values".into()));
    }
    Ok(())
}

fn empirical_ft(sample: &[f64], omega: f64) -> Complex64 {
    let (mut re, mut im) = (0.0, 0.0);
    for &y in sample {
        let (s, c) = (omega * y).sin_cos();
        re += c;
        im -= s;
    }
    Complex64::new(re, im) / sample.len() as f64
}

impl PilotEstimate {
    pub fn empirical_cf(sample: Vec<f64>) -> Result<Self, FourierError> {
        check_sample(&sample)?;
        Ok(PilotEstimate::EmpiricalCf { sample })
    }

    pub fn kde(sample: Vec<f64>, kernel: NamedKernel, bandwidth: f64) -> Result<Self, FourierError> {
        check_sample(&sample)?;
        positive("bandwidth", bandwidth)?;
        Ok(PilotEstimate::Kde { sample, kernel, bandwidth })
    }

    pub fn histogram(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self, FourierError> {
        if edges.len() < 2 || counts.len() + 1 != edges.len() {
            return Err(FourierError::InvalidParameter("histogram needs len(edges) = len(counts) + 1 ≥ 2".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite()) {
            return Err(FourierError::InvalidParameter("histogram edges must be strictly increasing".into()));
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(FourierError::InvalidParameter("histogram has no mass".into()));
        }
        Ok(PilotEstimate::Histogram { edges, counts })
    }

    /// Equal-width histogram of `sample` over its range.
    pub fn histogram_from_sample(sample: &[f64], bins: usize) -> Result<Self, FourierError> {
        check_sample(sample)?;
        let bins = bins.max(1);
        let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for &y in sample {
            let k = (((y - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self::histogram(edges, counts)
    }

    pub fn sample_size(&self) -> usize {
        match self {
            PilotEstimate::EmpiricalCf { sample } | PilotEstimate::Kde { sample, .. } => sample.len(),
            PilotEstimate::Histogram { counts, .. } => counts.iter().sum::<u64>() as usize,
        }
    }

    /// Whether the transform is integrable, i.e. the pilot is a smoothed
    /// density rather than the raw empirical measure.
    pub fn is_smoothed(&self) -> bool {
        !matches!(self, PilotEstimate::EmpiricalCf { .. })
    }

    /// Span of the data (or histogram support).
    pub fn data_range(&self) -> (f64, f64) {
        match self {
            PilotEstimate::EmpiricalCf { sample } | PilotEstimate::Kde { sample, .. } => {
                let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            PilotEstimate::Histogram { edges, .. } => (edges[0], edges[edges.len() - 1]),
        }
    }

    /// Upper bound on `|h̃_n(ω)|` used for tail decisions.
    pub fn ft_envelope(&self, omega: f64) -> f64 {
        match self {
            PilotEstimate::EmpiricalCf { .. } => 1.0,
            PilotEstimate::Kde { kernel, bandwidth, .. } => kernel.ft(bandwidth * omega).abs(),
            PilotEstimate::Histogram { edges, .. } => {
                let min_width = edges.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                (2.0 / (omega.abs() * min_width)).min(1.0)
            }
        }
    }

    /// `h̃_n(ω)`, exactly.
    pub fn ft(&self, omega: f64) -> Complex64 {
        match self {
            PilotEstimate::EmpiricalCf { sample } => empirical_ft(sample, omega),
            PilotEstimate::Kde { sample, kernel, bandwidth } => {
                let k = kernel.ft(bandwidth * omega);
                if k == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    empirical_ft(sample, omega) * k
                }
            }
            PilotEstimate::Histogram { edges, counts } => {
                let n = counts.iter().sum::<u64>() as f64;
                let mut acc = Complex64::new(0.0, 0.0);
                for (w, &c) in edges.windows(2).zip(counts) {
                    if c == 0 {
                        continue;
                    }
                    let mid = 0.5 * (w[0] + w[1]);
                    let half = 0.5 * (w[1] - w[0]);
                    acc += Complex64::from_polar(c as f64 / n * sinc(omega * half), -omega * mid);
                }
                acc
            }
        }
    }
}

impl Spectrum for PilotEstimate {
    fn ft(&self, omega: f64) -> Complex64 {
        PilotEstimate::ft(self, omega)
    }
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Trapezoid,
    GaussLegendrePanels,
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A symmetric rule on `[-omega_max, omega_max]`.
#[derive(Clone, Debug)]
pub struct FrequencyQuadrature {
    omega_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    rule: QuadratureRule,
    tail_tol: f64,
}

impl FrequencyQuadrature {
    /// Rule with node spacing at most `omega_max / resolution`.
    pub fn build(omega_max: f64, resolution: usize, rule: QuadratureRule) -> Result<Self, FourierError> {
        positive("omega_max", omega_max)?;
        if resolution < 16 {
            return Err(FourierError::BadResolution(resolution));
        }
        match rule {
            QuadratureRule::Trapezoid => {
                let intervals = 2 * resolution;
                let h = 2.0 * omega_max / intervals as f64;
                let nodes: Vec<f64> = (0..=intervals).map(|k| -omega_max + k as f64 * h).collect();
                let mut weights = vec![h; intervals + 1];
                weights[0] = 0.5 * h;
                weights[intervals] = 0.5 * h;
                Ok(FrequencyQuadrature { omega_max, nodes, weights, rule, tail_tol: DEFAULT_TAIL_TOL })
            }
            QuadratureRule::GaussLegendrePanels => {
                // The widest gap inside an 8-point panel is < 0.2 of its width.
                let panels = resolution.div_ceil(4);
                let edges: Vec<f64> = (0..=panels).map(|k| omega_max * k as f64 / panels as f64).collect();
                Ok(Self::from_half_edges(&edges))
            }
        }
    }

    /// Gauss–Legendre panels on `[0, edges.last()]` mirrored to the negative
    /// half-line. `edges` must start at 0 and increase.
    pub fn from_half_edges(edges: &[f64]) -> Self {
        let (gx, gw) = gauss_legendre(GL_ORDER);
        let mut pos = Vec::with_capacity((edges.len() - 1) * GL_ORDER);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, wt) in gx.iter().zip(&gw) {
                pos.push((mid + half * x, half * wt));
            }
        }
        let mut nodes = Vec::with_capacity(2 * pos.len());
        let mut weights = Vec::with_capacity(2 * pos.len());
        for &(x, w) in pos.iter().rev() {
            nodes.push(-x);
            weights.push(w);
        }
        for &(x, w) in &pos {
            nodes.push(x);
            weights.push(w);
        }
        FrequencyQuadrature {
            omega_max: *edges.last().expect("at least one panel"),
            nodes,
            weights,
            rule: QuadratureRule::GaussLegendrePanels,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }

    /// Panels graded geometrically from `omega_min` to `omega_max`, for smooth
    /// non-oscillatory even integrands whose features span many decades.
    pub fn graded(omega_min: f64, omega_max: f64, ratio: f64) -> Self {
        let mut edges = vec![0.0, omega_min];
        let mut e = omega_min;
        while e < omega_max {
            e = (e * ratio).min(omega_max);
            edges.push(e);
        }
        Self::from_half_edges(&edges)
    }

    /// Oscillation-resolving panels whose truncation point is doubled until
    /// `envelope` falls below `1e-12` of its value at zero. `extent` bounds
    /// `|x|` plus the spread of any phase carried by the spectrum.
    pub fn for_envelope(envelope: impl Fn(f64) -> f64, extent: f64) -> Result<Self, FourierError> {
        let mut peak = envelope(0.0).abs();
        let oscillation_width = (4.0 / extent.max(1e-9)).min(0.5);
        let mut omega = 1.0 / 1024.0;
        loop {
            let edge = envelope(omega).abs();
            peak = peak.max(edge);
            // At least 64 panels below the cutoff so narrow spectra are resolved.
            let width = oscillation_width.min(omega / 64.0);
            let panels = (omega / width).ceil() as usize;
            if 2 * panels * GL_ORDER > MAX_NODES || !edge.is_finite() {
                return Err(FourierError::TailTooFat { omega_max: omega, edge, peak });
            }
            if edge < 1e-12 * peak {
                let edges: Vec<f64> = (0..=panels).map(|k| omega * k as f64 / panels as f64).collect();
                return Ok(Self::from_half_edges(&edges));
            }
            omega *= 2.0;
        }
    }

    pub fn with_tail_tol(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Nodes `ω ≥ 0` with the weights that integrate an even function over
    /// the whole line.
    pub fn even_half(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.nodes.len();
        (n / 2..n).map(move |k| {
            let w = if self.nodes[k] == 0.0 { self.weights[k] } else { 2.0 * self.weights[k] };
            (self.nodes[k], w)
        })
    }

    /// Integral over the whole line of an even integrand, evaluated on the
    /// nonnegative half only.
    pub fn integrate_even(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.even_half().map(|(x, w)| w * f(x)).sum()
    }

    /// Fails when `bound(±omega_max)` is not below `tol` times its peak on
    /// the nodes.
    pub fn tail_check(&self, bound: impl Fn(f64) -> f64, tol: f64) -> Result<(), FourierError> {
        let peak = self.nodes.iter().map(|&w| bound(w).abs()).fold(0.0, f64::max);
        let edge = bound(self.omega_max).abs().max(bound(-self.omega_max).abs());
        if edge > tol * peak {
            return Err(FourierError::TailTooFat { omega_max: self.omega_max, edge, peak });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Inversion
// ---------------------------------------------------------------------------

/// Evenly spaced evaluation points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    /// `len` points from `lo` to `hi` inclusive.
    pub fn new(lo: f64, hi: f64, len: usize) -> Result<Self, FourierError> {
        if !(hi > lo) || len < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(FourierError::InvalidParameter(format!("bad grid [{lo}, {hi}] with {len} points")));
        }
        Ok(UniformGrid { start: lo, step: (hi - lo) / (len - 1) as f64, len })
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    pub fn end(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn max_abs(&self) -> f64 {
        self.start.abs().max(self.end().abs())
    }
}

struct SampledSpectrum {
    /// Positive nodes with pair weights; `zero` holds the weight of a node at 0.
    pos: Vec<(f64, f64, Complex64, Complex64)>,
    zero: Option<(f64, Complex64)>,
}

fn sample_spectrum<S: Spectrum + ?Sized>(spectrum: &S, quad: &FrequencyQuadrature) -> Result<SampledSpectrum, FourierError> {
    let values: Vec<Complex64> = quad.nodes.par_iter().map(|&w| spectrum.ft(w)).collect();
    let n = values.len();
    let peak = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let edge = values[0].norm().max(values[n - 1].norm());
    if peak > 0.0 && edge > quad.tail_tol * peak {
        return Err(FourierError::TailTooFat { omega_max: quad.omega_max, edge, peak });
    }
    let herm_tol = 1e-10 * peak.max(f64::MIN_POSITIVE);
    let mut pos = Vec::with_capacity(n / 2);
    let mut zero = None;
    for k in n / 2..n {
        let w = quad.nodes[k];
        if w == 0.0 {
            zero = Some((quad.weights[k], values[k]));
            continue;
        }
        let plus = values[k];
        let minus = values[n - 1 - k];
        let gap = (minus - plus.conj()).norm();
        if gap > herm_tol {
            return Err(FourierError::NonHermitianSpectrum { omega: w, gap });
        }
        pos.push((w, quad.weights[k], plus, minus));
    }
    Ok(SampledSpectrum { pos, zero })
}

fn finish(re: f64, im: f64) -> Result<f64, FourierError> {
    let scale = 1.0 / (2.0 * PI);
    if (im * scale).abs() > IMAG_RESIDUE_TOL {
        return Err(FourierError::ImaginaryResidue((im * scale).abs()));
    }
    Ok(re * scale)
}

/// `(2π)⁻¹ Σ_k w_k e^{iω_k x} S(ω_k)` at each `x`, real part kept after the
/// imaginary residue is checked.
pub fn invert_on_grid<S: Spectrum + ?Sized>(
    spectrum: &S,
    quad: &FrequencyQuadrature,
    xs: &[f64],
) -> Result<Vec<f64>, FourierError> {
    let sampled = sample_spectrum(spectrum, quad)?;
    xs.par_iter()
        .map(|&x| {
            let (mut re, mut im) = (0.0, 0.0);
            if let Some((w, z)) = sampled.zero {
                re += w * z.re;
                im += w * z.im;
            }
            for &(omega, w, plus, minus) in &sampled.pos {
                let e = Complex64::from_polar(1.0, omega * x);
                let s = plus * e + minus * e.conj();
                re += w * s.re;
                im += w * s.im;
            }
            finish(re, im)
        })
        .collect()
}

const CHUNK: usize = 128;

/// Same as [`invert_on_grid`] on an evenly spaced grid, using phase rotation
/// instead of a trig call per (node, point).
pub fn invert_on_uniform_grid<S: Spectrum + ?Sized>(
    spectrum: &S,
    quad: &FrequencyQuadrature,
    grid: &UniformGrid,
) -> Result<Vec<f64>, FourierError> {
    let sampled = sample_spectrum(spectrum, quad)?;
    let chunks: Vec<usize> = (0..grid.len).step_by(CHUNK).collect();
    let parts: Vec<Result<Vec<f64>, FourierError>> = chunks
        .par_iter()
        .map(|&first| {
            let len = CHUNK.min(grid.len - first);
            let x0 = grid.point(first);
            let mut re = vec![0.0; len];
            let mut im = vec![0.0; len];
            if let Some((w, z)) = sampled.zero {
                re.iter_mut().for_each(|r| *r += w * z.re);
                im.iter_mut().for_each(|i| *i += w * z.im);
            }
            for &(omega, w, plus, minus) in &sampled.pos {
                let mut e = Complex64::from_polar(1.0, omega * x0);
                let rot = Complex64::from_polar(1.0, omega * grid.step);
                let (pw, mw) = (plus * w, minus * w);
                for j in 0..len {
                    let s = pw * e + mw * e.conj();
                    re[j] += s.re;
                    im[j] += s.im;
                    e *= rot;
                }
            }
            re.into_iter().zip(im).map(|(r, i)| finish(r, i)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(grid.len);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}
