//! Closed-form MISE of the empirical-CF SPeD, the deconvoluting kernel
//! estimator and the error-free kernel estimator, the search for the best
//! tuning parameter, and equivalent sample sizes.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{check_cf_on_band, EstimatorError};
use crate::fourier::{ErrorFamily, ErrorModel, FourierError, FrequencyQuadrature, NamedKernel, TargetDensity};
use crate::multiplier::{error_cf, MultiplierError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MiseError {
    #[error(transparent)]
    Fourier(#[from] FourierError),

    #[error(transparent)]
    Estimator(#[from] EstimatorError),

    #[error(transparent)]
    Multiplier(#[from] MultiplierError),

    #[error("MISE is monotone in {what} over [{lo:e}, {hi:e}]")]
    NoBracket { what: &'static str, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl MiseError {
    pub fn name(&self) -> &'static str {
        match self {
            MiseError::Fourier(e) => e.name(),
            MiseError::Estimator(e) => e.name(),
            MiseError::Multiplier(e) => e.name(),
            MiseError::NoBracket { .. } => "NoBracket",
            MiseError::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

/// Estimator whose MISE is analysed.
#[derive(Clone, Debug)]
pub enum MiseEstimator {
    /// Empirical-CF SPeD with penalty order `m`, tuned by `α`.
    Sped { m: u32 },
    /// Deconvoluting kernel estimator, tuned by the bandwidth `λ`.
    Dke { kernel: NamedKernel },
    /// Kernel estimator on uncontaminated data, tuned by `λ`.
    ErrorFreeKde { kernel: NamedKernel },
}

impl MiseEstimator {
    pub fn tuning_name(&self) -> &'static str {
        match self {
            MiseEstimator::Sped { .. } => "alpha",
            _ => "lambda",
        }
    }

    /// Default search range of the tuning parameter.
    pub fn tuning_range(&self) -> (f64, f64) {
        match self {
            MiseEstimator::Sped { .. } => (1e-10, 1e4),
            _ => (1e-3, 10.0),
        }
    }
}

impl fmt::Display for MiseEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MiseEstimator::Sped { m } => write!(f, "sped(m={m})"),
            MiseEstimator::Dke { kernel } => write!(f, "dke({})", kernel.name()),
            MiseEstimator::ErrorFreeKde { kernel } => write!(f, "kde({})", kernel.name()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MiseSetting {
    pub target: TargetDensity,
    /// `None` means no measurement error.
    pub error: Option<ErrorModel>,
    pub n: u64,
    pub estimator: MiseEstimator,
}

impl MiseSetting {
    pub fn new(
        target: TargetDensity,
        error: Option<ErrorModel>,
        n: u64,
        estimator: MiseEstimator,
    ) -> Result<Self, MiseError> {
        target.validate()?;
        if n == 0 {
            return Err(MiseError::InvalidParameter("n must be positive".into()));
        }
        if let MiseEstimator::Sped { m } = estimator {
            if m == 0 {
                return Err(MiseError::InvalidParameter("penalty order m must be positive".into()));
            }
        }
        // The error-free estimator never sees the error.
        let error = if matches!(estimator, MiseEstimator::ErrorFreeKde { .. }) { None } else { error };
        Ok(MiseSetting { target, error, n, estimator })
    }

    /// Error of `family` with `Var(E) = p/(1−p)·Var(X)`, i.e. a fraction `p`
    /// of the contaminated variance.
    pub fn calibrated(
        target: TargetDensity,
        p: f64,
        family: ErrorFamily,
        n: u64,
        estimator: MiseEstimator,
    ) -> Result<Self, MiseError> {
        let error = ErrorModel::calibrated(family, p, target.variance())?;
        Self::new(target, error, n, estimator)
    }

    pub fn with_n(&self, n: u64) -> Self {
        MiseSetting { n, ..self.clone() }
    }

    pub fn with_estimator(&self, estimator: MiseEstimator) -> Self {
        let error = if matches!(estimator, MiseEstimator::ErrorFreeKde { .. }) { None } else { self.error };
        MiseSetting { estimator, error, ..self.clone() }
    }
}

/// The two parts of the MISE: `mise = systematic + variance / n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiseTerms {
    pub systematic: f64,
    /// Variance term for a single observation.
    pub variance: f64,
}

impl MiseTerms {
    pub fn total(&self, n: u64) -> f64 {
        self.systematic + self.variance / n as f64
    }
}

/// Upper bound on `|f̃|`, monotone where `|f̃|` interferes.
fn target_cf_envelope(target: &TargetDensity, omega: f64) -> f64 {
    match target {
        TargetDensity::NormalMixture(cs) => {
            cs.iter().map(|c| c.weight * (-0.5 * (c.sd * omega).powi(2)).exp()).sum()
        }
        TargetDensity::GammaMixture(cs) => {
            cs.iter().map(|c| c.weight * (1.0 + (omega / c.rate).powi(2)).powf(-0.5 * c.shape)).sum()
        }
        _ => target.cf_abs_sq(omega).sqrt(),
    }
}

/// Nonincreasing bound on `|g̃|`.
fn error_cf_envelope(error: Option<&ErrorModel>, omega: f64) -> f64 {
    match error {
        Some(ErrorModel::Uniform { half_width }) => (1.0 / (half_width * omega.abs())).min(1.0),
        _ => error_cf(error, omega).abs(),
    }
}

const CUTOFF: f64 = 1e-16;
const OMEGA_CAP: f64 = 1e8;

/// Smallest power-of-two `ω ≥ 1/8` where `env(ω)` is below `CUTOFF` of
/// the largest value seen on a log scan up to it.
pub(crate) fn truncation(env: impl Fn(f64) -> f64) -> Result<f64, MiseError> {
    let mut peak = env(0.0).abs();
    let mut w = 1e-3;
    while w < 0.125 {
        peak = peak.max(env(w).abs());
        w *= 2.0;
    }
    let mut omega = 0.125;
    loop {
        let edge = env(omega).abs();
        if !edge.is_finite() || omega > OMEGA_CAP {
            return Err(FourierError::TailTooFat { omega_max: omega, edge, peak }.into());
        }
        peak = peak.max(edge);
        if edge <= CUTOFF * peak {
            return Ok(omega);
        }
        omega *= 2.0;
    }
}

const GRADE_START: f64 = 1e-4;
const GRADE_RATIO: f64 = 1.2;

fn quadrature_to(omega_max: f64) -> FrequencyQuadrature {
    FrequencyQuadrature::graded(GRADE_START.min(omega_max / 8.0), omega_max, GRADE_RATIO)
}

fn target_cutoff(target: &TargetDensity) -> Result<f64, MiseError> {
    truncation(|w| target_cf_envelope(target, w).powi(2))
}

/// `(2π)⁻¹∫ |ψ g̃ − 1|²|f̃|²` and `(2π)⁻¹∫ |ψ|²(1 − |g̃f̃|²)` for a real even
/// `ψ` on a quadrature reaching `omega_max`.
fn terms_for(
    target: &TargetDensity,
    error: Option<&ErrorModel>,
    psi: impl Fn(f64) -> f64,
    omega_max: f64,
) -> MiseTerms {
    let quad = quadrature_to(omega_max);
    let (mut sys, mut var) = (0.0, 0.0);
    for (w, wt) in quad.even_half() {
        let f2 = target.cf_abs_sq(w);
        let g = error_cf(error, w);
        let p = psi(w);
        sys += wt * (p * g - 1.0).powi(2) * f2;
        var += wt * p * p * (1.0 - g * g * f2);
    }
    MiseTerms { systematic: sys / (2.0 * PI), variance: var / (2.0 * PI) }
}

/// Terms beyond `omega_max` where `ψ` vanishes: `(2π)⁻¹∫_{|ω|>Ω}|f̃|²`.
fn tail_systematic(target: &TargetDensity, omega_max: f64) -> Result<f64, MiseError> {
    let far = target_cutoff(target)?;
    if far <= omega_max {
        return Ok(0.0);
    }
    let quad = FrequencyQuadrature::graded(omega_max * 0.01, far - omega_max, GRADE_RATIO);
    Ok(quad.integrate_even(|w| target.cf_abs_sq(omega_max + w.abs())) / (2.0 * PI))
}

fn positive(name: &str, v: f64) -> Result<f64, MiseError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(MiseError::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

pub(crate) fn sped_multiplier(error: Option<&ErrorModel>, m: u32, alpha: f64, w: f64) -> f64 {
    let g = error_cf(error, w);
    let den = g * g + alpha * w.powi(2 * m as i32);
    if den == 0.0 { 0.0 } else { g / den }
}

/// Frequency beyond which `|φ̃_α|²` is negligible.
pub(crate) fn sped_cutoff(error: Option<&ErrorModel>, m: u32, alpha: f64) -> Result<f64, MiseError> {
    // Past the first zero of g̃, bound |φ̃| over every |g̃| below its envelope.
    let first_zero = error.and_then(|e| e.first_cf_zero()).unwrap_or(f64::INFINITY);
    let phi_env = |w: f64| {
        if w.abs() < first_zero {
            return sped_multiplier(error, m, alpha, w).abs();
        }
        let c = alpha * w.powi(2 * m as i32);
        let g = error_cf_envelope(error, w);
        if g * g <= c { g / (g * g + c) } else { 0.5 / c.sqrt() }
    };
    truncation(|w| phi_env(w).powi(2))
}

/// Systematic and per-sample variance terms of the empirical-CF SPeD.
pub fn sped_terms(
    target: &TargetDensity,
    error: Option<&ErrorModel>,
    m: u32,
    alpha: f64,
) -> Result<MiseTerms, MiseError> {
    positive("alpha", alpha)?;
    let omega = target_cutoff(target)?.max(sped_cutoff(error, m, alpha)?);
    Ok(terms_for(target, error, |w| sped_multiplier(error, m, alpha, w), omega))
}

/// `|f̃|²` and `g̃` tabulated on a fixed frequency quadrature, for MISE
/// evaluations against a density known only through its transform.
#[derive(Clone, Debug)]
pub struct SpectralTable {
    nodes: Vec<(f64, f64)>,
    f_abs_sq: Vec<f64>,
    g: Vec<f64>,
}

impl SpectralTable {
    /// Tabulates on graded panels up to `omega_max`; `|f̃|²` is taken as zero
    /// beyond `f_cutoff`.
    pub fn new(
        f_abs_sq: impl Fn(f64) -> f64 + Sync,
        f_cutoff: f64,
        error: Option<&ErrorModel>,
        omega_max: f64,
    ) -> Self {
        use rayon::prelude::*;
        let quad = quadrature_to(omega_max.max(f_cutoff));
        let nodes: Vec<(f64, f64)> = quad.even_half().collect();
        let f_abs_sq = nodes.par_iter().map(|&(w, _)| if w <= f_cutoff { f_abs_sq(w) } else { 0.0 }).collect();
        let g = nodes.iter().map(|&(w, _)| error_cf(error, w)).collect();
        SpectralTable { nodes, f_abs_sq, g }
    }

    /// Table for the SPeD surrogate over penalties down to `alpha_min`.
    pub fn for_sped(
        f_abs_sq: impl Fn(f64) -> f64 + Sync,
        f_cutoff: f64,
        error: Option<&ErrorModel>,
        m: u32,
        alpha_min: f64,
    ) -> Result<Self, MiseError> {
        Ok(Self::new(f_abs_sq, f_cutoff, error, sped_cutoff(error, m, alpha_min)?))
    }

    pub fn sped_terms(&self, error: Option<&ErrorModel>, m: u32, alpha: f64) -> MiseTerms {
        let (mut sys, mut var) = (0.0, 0.0);
        for ((&(w, wt), &f2), &g) in self.nodes.iter().zip(&self.f_abs_sq).zip(&self.g) {
            let p = sped_multiplier(error, m, alpha, w);
            sys += wt * (p * g - 1.0).powi(2) * f2;
            var += wt * p * p * (1.0 - g * g * f2);
        }
        MiseTerms { systematic: sys / (2.0 * PI), variance: var / (2.0 * PI) }
    }
}

/// Terms of a kernel estimator `ψ = κ(λω)/g̃`, with `g̃ ≡ 1` when `error`
/// is `None`.
pub fn kernel_terms(
    target: &TargetDensity,
    error: Option<&ErrorModel>,
    kernel: &NamedKernel,
    lambda: f64,
) -> Result<MiseTerms, MiseError> {
    positive("lambda", lambda)?;
    let psi = |w: f64| {
        let k = kernel.ft(lambda * w);
        if k == 0.0 { 0.0 } else { k / error_cf(error, w) }
    };
    match kernel.band() {
        Some(band) => {
            let omega = band / lambda;
            check_cf_on_band(error, omega)?;
            let mut t = terms_for(target, error, psi, omega);
            t.systematic += tail_systematic(target, omega)?;
            Ok(t)
        }
        None => {
            if error.is_some_and(|e| e.first_cf_zero().is_some()) {
                return Err(EstimatorError::ErrorCFVanishesOnBand {
                    omega: error.and_then(|e| e.first_cf_zero()).unwrap_or(f64::NAN),
                }
                .into());
            }
            let omega = target_cutoff(target)?.max(truncation(|w| psi(w).powi(2))?);
            Ok(terms_for(target, error, psi, omega))
        }
    }
}

/// Terms of SPeD applied to a kernel-smoothed pilot: `ψ = φ̃_α(ω) κ(λω)`.
pub fn smoothed_pilot_terms(
    target: &TargetDensity,
    error: Option<&ErrorModel>,
    m: u32,
    alpha: f64,
    kernel: &NamedKernel,
    lambda: f64,
) -> Result<MiseTerms, MiseError> {
    positive("alpha", alpha)?;
    positive("lambda", lambda)?;
    let psi = |w: f64| sped_multiplier(error, m, alpha, w) * kernel.ft(lambda * w);
    match kernel.band() {
        Some(band) => {
            let omega = band / lambda;
            let mut t = terms_for(target, error, psi, omega);
            t.systematic += tail_systematic(target, omega)?;
            Ok(t)
        }
        None => {
            let omega = target_cutoff(target)?.max(sped_cutoff(error, m, alpha)?);
            Ok(terms_for(target, error, psi, omega))
        }
    }
}

/// `(2π)⁻¹ ∫ ω^{2k} |f̃(ω)|² dω`, i.e. `‖f^{(k)}‖²`.
pub fn derivative_energy(target: &TargetDensity, k: u32) -> Result<f64, MiseError> {
    let omega = truncation(|w| w.powi(2 * k as i32) * target_cf_envelope(target, w).powi(2))?;
    Ok(quadrature_to(omega).integrate_even(|w| w.powi(2 * k as i32) * target.cf_abs_sq(w)) / (2.0 * PI))
}

/// Terms for the setting's estimator at tuning parameter `tuning`.
pub fn mise_terms(setting: &MiseSetting, tuning: f64) -> Result<MiseTerms, MiseError> {
    match &setting.estimator {
        MiseEstimator::Sped { m } => sped_terms(&setting.target, setting.error.as_ref(), *m, tuning),
        MiseEstimator::Dke { kernel } => kernel_terms(&setting.target, setting.error.as_ref(), kernel, tuning),
        MiseEstimator::ErrorFreeKde { kernel } => kernel_terms(&setting.target, None, kernel, tuning),
    }
}

/// MISE of the setting's estimator at tuning parameter `tuning` (α or λ).
pub fn mise(setting: &MiseSetting, tuning: f64) -> Result<f64, MiseError> {
    Ok(mise_terms(setting, tuning)?.total(setting.n))
}

/// MISE of the empirical-CF SPeD at penalty `alpha`.
pub fn mise_sped(setting: &MiseSetting, alpha: f64) -> Result<f64, MiseError> {
    let MiseEstimator::Sped { m } = setting.estimator else {
        return Err(MiseError::InvalidParameter(format!("setting estimator is {}, not SPeD", setting.estimator)));
    };
    Ok(sped_terms(&setting.target, setting.error.as_ref(), m, alpha)?.total(setting.n))
}

/// MISE of the deconvoluting kernel estimator at bandwidth `lambda`.
pub fn mise_dke(setting: &MiseSetting, lambda: f64) -> Result<f64, MiseError> {
    let MiseEstimator::Dke { kernel } = &setting.estimator else {
        return Err(MiseError::InvalidParameter(format!("setting estimator is {}, not DKE", setting.estimator)));
    };
    Ok(kernel_terms(&setting.target, setting.error.as_ref(), kernel, lambda)?.total(setting.n))
}

/// MISE of the kernel estimator on `n` uncontaminated observations.
pub fn mise_error_free(target: &TargetDensity, n: u64, lambda: f64, kernel: &NamedKernel) -> Result<f64, MiseError> {
    if n == 0 {
        return Err(MiseError::InvalidParameter("n must be positive".into()));
    }
    Ok(kernel_terms(target, None, kernel, lambda)?.total(n))
}

/// `‖f^α − f‖²`, the systematic part of the SPeD MISE.
pub fn systematic_sped(target: &TargetDensity, error: Option<&ErrorModel>, m: u32, alpha: f64) -> Result<f64, MiseError> {
    Ok(sped_terms(target, error, m, alpha)?.systematic)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiseMinimum {
    pub argmin: f64,
    pub value: f64,
}

const GRID_POINTS: usize = 60;
const WIDEN_DECADES: f64 = 4.0;

/// Minimum of `mise` over the estimator's tuning range: a 60-point log grid
/// brackets the minimum, golden section on the log parameter refines it.
pub fn min_mise(setting: &MiseSetting) -> Result<MiseMinimum, MiseError> {
    let (lo, hi) = setting.estimator.tuning_range();
    min_mise_in(setting, lo, hi)
}

pub fn min_mise_in(setting: &MiseSetting, lo: f64, hi: f64) -> Result<MiseMinimum, MiseError> {
    minimize_log(|t| mise(setting, t), lo, hi, setting.estimator.tuning_name())
}

/// Minimizes `objective` over `[lo, hi]` on a log scale. Non-finite values
/// and overflowing quadratures count as +∞.
pub fn minimize_log(
    mut objective: impl FnMut(f64) -> Result<f64, MiseError>,
    lo: f64,
    hi: f64,
    what: &'static str,
) -> Result<MiseMinimum, MiseError> {
    positive("lower tuning bound", lo)?;
    if !(hi > lo) {
        return Err(MiseError::InvalidParameter(format!("empty tuning range [{lo}, {hi}]")));
    }
    let mut eval = |t: f64| -> Result<f64, MiseError> {
        match objective(t) {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Ok(f64::INFINITY),
            // Overflowing 1/g̃ at tiny bandwidths just means a useless λ.
            Err(MiseError::Fourier(FourierError::TailTooFat { .. })) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    let (mut llo, mut lhi) = (lo.ln(), hi.ln());
    let mut widened = false;
    loop {
        let ts: Vec<f64> =
            (0..GRID_POINTS).map(|k| llo + (lhi - llo) * k as f64 / (GRID_POINTS - 1) as f64).collect();
        let vals = ts.iter().map(|&t| eval(t.exp())).collect::<Result<Vec<_>, _>>()?;
        let mut best = 0;
        for (k, v) in vals.iter().enumerate() {
            if *v < vals[best] {
                best = k;
            }
        }
        if !vals[best].is_finite() {
            return Err(MiseError::NoBracket { what, lo: llo.exp(), hi: lhi.exp() });
        }
        if best == 0 || best == GRID_POINTS - 1 {
            if widened {
                return Err(MiseError::NoBracket { what, lo: llo.exp(), hi: lhi.exp() });
            }
            widened = true;
            let shift = WIDEN_DECADES * std::f64::consts::LN_10;
            if best == 0 {
                llo -= shift;
            } else {
                lhi += shift;
            }
            continue;
        }
        // Golden section over the two grid cells around the best point.
        let mut err = None;
        let f = |t: f64| match eval(t.exp()) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::INFINITY
            }
        };
        let (t_best, v) = golden_min(f, ts[best - 1], ts[best + 1], 1e-7);
        if let Some(e) = err {
            return Err(e);
        }
        let (argmin, value) = if v <= vals[best] { (t_best.exp(), v) } else { (ts[best].exp(), vals[best]) };
        return Ok(MiseMinimum { argmin, value });
    }
}

/// Golden-section minimization to an absolute bracket width.
fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, abs_tol: f64) -> (f64, f64) {
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > abs_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd { (c, fc) } else { (d, fd) }
}

/// Result of an equivalent-sample-size search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquivalentN {
    Found(u64),
    /// No `n` up to the cap reaches the reference.
    Exceeded,
}

impl fmt::Display for EquivalentN {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EquivalentN::Found(n) => write!(f, "{n}"),
            EquivalentN::Exceeded => write!(f, ">{}", EQUIVALENT_N_CAP),
        }
    }
}

pub const EQUIVALENT_N_CAP: u64 = 1_000_000;

/// Reference minimum MISE of the error-free kernel estimator.
pub fn reference_mise(target: &TargetDensity, reference_n: u64, kernel: &NamedKernel) -> Result<MiseMinimum, MiseError> {
    let setting = MiseSetting::new(target.clone(), None, reference_n, MiseEstimator::ErrorFreeKde { kernel: kernel.clone() })?;
    min_mise(&setting)
}

/// Smallest `n` whose minimum MISE for `setting` (its own `n` is ignored) is
/// at most the error-free reference at `reference_n` with `reference_kernel`.
pub fn equivalent_n(
    setting: &MiseSetting,
    reference_n: u64,
    reference_kernel: &NamedKernel,
) -> Result<EquivalentN, MiseError> {
    let reference = reference_mise(&setting.target, reference_n, reference_kernel)?.value;
    equivalent_n_to(setting, reference, reference_n)
}

/// [`equivalent_n`] against a given reference value, searching from `start`.
pub fn equivalent_n_to(setting: &MiseSetting, reference: f64, start: u64) -> Result<EquivalentN, MiseError> {
    let reaches = |n: u64| -> Result<bool, MiseError> {
        let v = min_mise(&setting.with_n(n))?.value;
        // NaN compares false and so counts as not reaching.
        Ok(v <= reference)
    };
    let start = start.clamp(1, EQUIVALENT_N_CAP);
    let (mut lo, mut hi) = (1, start);
    if reaches(start)? {
        if start == 1 || reaches(1)? {
            return Ok(EquivalentN::Found(1));
        }
    } else {
        loop {
            if hi >= EQUIVALENT_N_CAP {
                return Ok(EquivalentN::Exceeded);
            }
            lo = hi;
            hi = (hi * 2).min(EQUIVALENT_N_CAP);
            if reaches(hi)? {
                break;
            }
        }
    }
    // lo fails, hi reaches.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(EquivalentN::Found(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::BenchmarkSetting;
    use approx::assert_relative_eq;

    fn setting_i(n: u64, estimator: MiseEstimator) -> MiseSetting {
        MiseSetting::calibrated(BenchmarkSetting::I.target(), 0.1, ErrorFamily::Gaussian, n, estimator).unwrap()
    }

    #[test]
    fn huge_alpha_leaves_the_squared_norm() {
        let s = setting_i(100, MiseEstimator::Sped { m: 2 });
        // The deficit shrinks like α^{-1/4}, so 1e-3 needs a very large α.
        let v = mise_sped(&s, 1e14).unwrap();
        assert!((v - 0.5 / PI.sqrt()).abs() < 1e-3, "{v}");
        let d = setting_i(100, MiseEstimator::Dke { kernel: NamedKernel::DkeDefault });
        let v = mise_dke(&d, 1e4).unwrap();
        assert!((v - 0.5 / PI.sqrt()).abs() < 1e-3, "{v}");
    }

    #[test]
    fn matches_adaptive_quadrature() {
        // scipy.integrate.quad with epsrel 1e-13 on the same integrands.
        let s = setting_i(100, MiseEstimator::Sped { m: 2 });
        assert_relative_eq!(mise_sped(&s, 1e6).unwrap(), 0.26813972927089297, max_relative = 1e-6);
        assert_relative_eq!(mise_sped(&s, 1e-2).unwrap(), 0.006648760529774931, max_relative = 1e-6);
        let d = setting_i(100, MiseEstimator::Dke { kernel: NamedKernel::DkeDefault });
        assert_relative_eq!(mise_dke(&d, 0.4).unwrap(), 0.02433349269987744, max_relative = 1e-6);
        assert_relative_eq!(mise_dke(&d, 1e4).unwrap(), 0.282076543279063, max_relative = 1e-6);
    }

    #[test]
    fn decomposition_in_n() {
        let s = setting_i(100, MiseEstimator::Sped { m: 2 });
        let a = mise_sped(&s, 1e-2).unwrap();
        let b = mise_sped(&s.with_n(200), 1e-2).unwrap();
        let t = mise_terms(&s, 1e-2).unwrap();
        assert_relative_eq!(a - b, t.variance / 200.0, max_relative = 1e-10);
    }

    #[test]
    fn error_free_kde_is_consistent() {
        let v = mise_error_free(&BenchmarkSetting::I.target(), 1_000_000_000, 0.05, &NamedKernel::ErrorFree).unwrap();
        assert!(v < 1e-4, "{v}");
    }

    #[test]
    fn dke_without_error_is_the_error_free_kde() {
        let target = BenchmarkSetting::I.target();
        let d = MiseSetting::new(target.clone(), None, 100, MiseEstimator::Dke { kernel: NamedKernel::DkeDefault }).unwrap();
        let a = mise_dke(&d, 0.4).unwrap();
        let b = mise_error_free(&target, 100, 0.4, &NamedKernel::DkeDefault).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn uniform_error_rejects_wide_dke_band() {
        let d = MiseSetting::new(
            BenchmarkSetting::I.target(),
            Some(ErrorModel::uniform(1.0).unwrap()),
            100,
            MiseEstimator::Dke { kernel: NamedKernel::DkeDefault },
        )
        .unwrap();
        assert!(matches!(
            mise_dke(&d, 0.1),
            Err(MiseError::Estimator(EstimatorError::ErrorCFVanishesOnBand { .. }))
        ));
        assert!(mise_dke(&d, 0.5).is_ok());
    }

    #[test]
    fn interior_minimum_below_norm() {
        let s = setting_i(100, MiseEstimator::Sped { m: 2 });
        let best = min_mise(&s).unwrap();
        assert!(best.value < 0.5 / PI.sqrt());
        assert!(best.argmin > 1e-10 && best.argmin < 1e4);
        for k in 0..40 {
            let a = 10f64.powf(-8.0 + 0.25 * k as f64);
            assert!(mise_sped(&s, a).unwrap() >= best.value * (1.0 - 1e-9));
        }
    }

    #[test]
    fn exceeded_displays_like_the_table() {
        assert_eq!(EquivalentN::Exceeded.to_string(), ">1000000");
        assert_eq!(EquivalentN::Found(146).to_string(), "146");
    }
}
