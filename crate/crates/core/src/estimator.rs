//! Density estimates by Fourier inversion: the SPeD estimate `φ_α * h_n`, the
//! α-smoothed target `f^α`, the deconvoluting kernel estimator, and the
//! discretized Tikhonov objective those estimates minimize.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::{
    invert_on_uniform_grid, ErrorModel, FourierError, FrequencyQuadrature, PilotEstimate, TargetDensity,
    UniformGrid,
};
use crate::multiplier::{error_cf, Multiplier, MultiplierError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Fourier(#[from] FourierError),

    #[error(transparent)]
    Multiplier(#[from] MultiplierError),

    #[error("error characteristic function vanishes at ω = {omega} inside the kernel band")]
    ErrorCFVanishesOnBand { omega: f64 },

    #[error("curves are sampled on different grids")]
    GridMismatch,

    #[error("pilot not admissible here: {0}")]
    PilotNotAdmissible(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl EstimatorError {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorError::Fourier(e) => e.name(),
            EstimatorError::Multiplier(e) => e.name(),
            EstimatorError::ErrorCFVanishesOnBand { .. } => "ErrorCFVanishesOnBand",
            EstimatorError::GridMismatch => "GridMismatch",
            EstimatorError::PilotNotAdmissible(_) => "PilotNotAdmissible",
            EstimatorError::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub estimator: String,
    /// α for SPeD-type curves, λ for kernel estimates.
    pub tuning: Option<f64>,
    pub pilot: Option<String>,
    /// Whether the curve is expected to integrate to one over its grid.
    pub normalized: bool,
    pub warnings: Vec<String>,
}

/// A density sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    pub meta: CurveMeta,
}

impl DensityCurve {
    pub fn new(grid: UniformGrid, values: Vec<f64>, meta: CurveMeta) -> Result<Self, EstimatorError> {
        if values.len() != grid.len {
            return Err(EstimatorError::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::InvalidParameter("curve has non-finite values".into()));
        }
        Ok(DensityCurve { grid, values, meta })
    }

    /// Samples `f` on `grid`.
    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> f64, meta: CurveMeta) -> Self {
        let values = (0..grid.len).map(|i| f(grid.point(i))).collect();
        DensityCurve { grid, values, meta }
    }

    pub fn xs(&self) -> Vec<f64> {
        self.grid.points()
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.step)
    }

    /// `∫ (self − other)²` over the shared grid.
    pub fn sq_distance(&self, other: &DensityCurve) -> Result<f64, EstimatorError> {
        self.check_grid(other)?;
        let d: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).powi(2)).collect();
        Ok(trapezoid(&d, self.grid.step))
    }

    pub fn sq_norm(&self) -> f64 {
        let d: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        trapezoid(&d, self.grid.step)
    }

    pub fn check_grid(&self, other: &DensityCurve) -> Result<(), EstimatorError> {
        let (a, b) = (&self.grid, &other.grid);
        let tol = 1e-12 * (a.start.abs() + a.step.abs()).max(1.0);
        if a.len != b.len || (a.start - b.start).abs() > tol || (a.step - b.step).abs() > tol {
            return Err(EstimatorError::GridMismatch);
        }
        Ok(())
    }
}

pub(crate) fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Largest `|x − y|` for `x` on the grid and `y` in `[lo, hi]`; bounds the
/// phase speed of the inverted spectrum.
fn phase_extent(grid: &UniformGrid, (lo, hi): (f64, f64)) -> f64 {
    (grid.end() - lo).abs().max((hi - grid.start).abs()).max(1.0)
}

/// `φ_α * h_n` sampled on `grid`.
pub fn sped_estimate(
    pilot: &PilotEstimate,
    mult: &Multiplier,
    grid: &UniformGrid,
) -> Result<DensityCurve, EstimatorError> {
    if !pilot.is_smoothed() && mult.m() < 2 {
        return Err(EstimatorError::PilotNotAdmissible(
            "an empirical-CF pilot needs m ≥ 2 for an integrable multiplier; use a KDE or histogram pilot".into(),
        ));
    }
    let quad = FrequencyQuadrature::for_envelope(
        |w| mult.value(w).abs() * pilot.ft_envelope(w),
        phase_extent(grid, pilot.data_range()),
    )?;
    sped_estimate_with(pilot, mult, &quad, grid)
}

/// [`sped_estimate`] on a caller-supplied frequency rule.
pub fn sped_estimate_with(
    pilot: &PilotEstimate,
    mult: &Multiplier,
    quad: &FrequencyQuadrature,
    grid: &UniformGrid,
) -> Result<DensityCurve, EstimatorError> {
    let spectrum = |w: f64| pilot.ft(w) * mult.value(w);
    let values = invert_on_uniform_grid(&spectrum, quad, grid)?;
    let meta = CurveMeta {
        estimator: format!("sped(m={})", mult.m()),
        tuning: Some(mult.alpha()),
        pilot: Some(pilot_label(pilot)),
        normalized: true,
        warnings: Vec::new(),
    };
    DensityCurve::new(*grid, values, meta)
}

pub fn pilot_label(pilot: &PilotEstimate) -> String {
    match pilot {
        PilotEstimate::EmpiricalCf { sample } => format!("ecf(n={})", sample.len()),
        PilotEstimate::Kde { sample, kernel, bandwidth } => {
            format!("kde(n={}, kernel={}, bandwidth={bandwidth})", sample.len(), kernel.name())
        }
        PilotEstimate::Histogram { counts, .. } => format!("histogram(bins={})", counts.len()),
    }
}

/// `f^α`, the deconvolution of the exact contaminated density.
pub fn alpha_smoothed(
    target: &TargetDensity,
    mult: &Multiplier,
    grid: &UniformGrid,
) -> Result<DensityCurve, EstimatorError> {
    let quad = FrequencyQuadrature::for_envelope(
        |w| mult.transfer(w) * target.cf_abs_sq(w).sqrt(),
        phase_extent(grid, target.effective_support()),
    )?;
    let spectrum = |w: f64| target.cf(w) * mult.transfer(w);
    let values = invert_on_uniform_grid(&spectrum, &quad, grid)?;
    let meta = CurveMeta {
        estimator: format!("alpha_smoothed(m={})", mult.m()),
        tuning: Some(mult.alpha()),
        pilot: None,
        normalized: true,
        warnings: Vec::new(),
    };
    DensityCurve::new(*grid, values, meta)
}

/// The deconvoluting kernel estimator `(2π)⁻¹ ∫ e^{iωx} P̃_n(ω) κ(λω) / g̃(ω) dω`.
pub fn dke_estimate(
    pilot: &PilotEstimate,
    error: Option<&ErrorModel>,
    grid: &UniformGrid,
) -> Result<DensityCurve, EstimatorError> {
    let PilotEstimate::Kde { kernel, bandwidth, .. } = pilot else {
        return Err(EstimatorError::PilotNotAdmissible("the deconvoluting kernel estimator needs a KDE pilot".into()));
    };
    let lambda = *bandwidth;
    let extent = phase_extent(grid, pilot.data_range());
    let quad = match kernel.band() {
        Some(band) => {
            let omega_max = band / lambda;
            check_cf_on_band(error, omega_max)?;
            let panels = ((omega_max * extent / 4.0).ceil() as usize).max(64);
            let edges: Vec<f64> = (0..=panels).map(|k| omega_max * k as f64 / panels as f64).collect();
            FrequencyQuadrature::from_half_edges(&edges).with_tail_tol(f64::INFINITY)
        }
        None => FrequencyQuadrature::for_envelope(
            |w| {
                let g = error_cf(error, w);
                (kernel.ft(lambda * w) / g).abs()
            },
            extent,
        )?,
    };
    let spectrum = |w: f64| {
        let g = error_cf(error, w);
        let k = kernel.ft(lambda * w);
        if k == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            pilot.ft(w) / g
        }
    };
    let values = invert_on_uniform_grid(&spectrum, &quad, grid)?;
    let meta = CurveMeta {
        estimator: match error {
            Some(_) => format!("dke(kernel={})", kernel.name()),
            None => format!("kde(kernel={})", kernel.name()),
        },
        tuning: Some(lambda),
        pilot: Some(pilot_label(pilot)),
        normalized: true,
        warnings: Vec::new(),
    };
    DensityCurve::new(*grid, values, meta)
}

/// Fails when `g̃` has a zero in `[0, omega_max]`.
pub fn check_cf_on_band(error: Option<&ErrorModel>, omega_max: f64) -> Result<(), EstimatorError> {
    let Some(g) = error else { return Ok(()) };
    if let Some(z) = g.first_cf_zero() {
        if z <= omega_max {
            return Err(EstimatorError::ErrorCFVanishesOnBand { omega: z });
        }
    }
    Ok(())
}

/// Discretized `‖g * v − u‖² + α ‖v^{(m)}‖²` for curves on a common grid.
///
/// The convolution is spectral (zero-padded FFT, multiply by `g̃`), the
/// derivative a fourth-order central difference, the norms trapezoidal.
pub fn tikhonov_objective(
    candidate: &DensityCurve,
    pilot_curve: &DensityCurve,
    error: &ErrorModel,
    alpha: f64,
    m: u32,
) -> Result<f64, EstimatorError> {
    candidate.check_grid(pilot_curve)?;
    if !(alpha >= 0.0) {
        return Err(EstimatorError::InvalidParameter(format!("alpha must be ≥ 0, got {alpha}")));
    }
    let h = candidate.grid.step;
    let smoothed = convolve_with_error(&candidate.values, h, error);
    let resid: Vec<f64> = smoothed.iter().zip(&pilot_curve.values).map(|(a, b)| (a - b).powi(2)).collect();
    let deriv = central_difference(&candidate.values, h, m)?;
    let dsq: Vec<f64> = deriv.iter().map(|d| d * d).collect();
    Ok(trapezoid(&resid, h) + alpha * trapezoid(&dsq, h))
}

/// `g * v` for `v` sampled with spacing `h` and zero outside its grid.
pub fn convolve_with_error(values: &[f64], h: f64, error: &ErrorModel) -> Vec<f64> {
    let n = values.len();
    let len = (4 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = (0..len).map(|j| Complex64::new(if j < n { values[j] } else { 0.0 }, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let kk = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
        *z *= error.cf(2.0 * PI * kk / (len as f64 * h));
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf[..n].iter().map(|z| z.re / len as f64).collect()
}

fn central_difference(v: &[f64], h: f64, m: u32) -> Result<Vec<f64>, EstimatorError> {
    let (stencil, scale): (&[f64], f64) = match m {
        1 => (&[1.0, -8.0, 0.0, 8.0, -1.0], 12.0 * h),
        2 => (&[-1.0, 16.0, -30.0, 16.0, -1.0], 12.0 * h * h),
        3 => (&[1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0], 8.0 * h * h * h),
        _ => {
            return Err(EstimatorError::InvalidParameter(format!("finite-difference penalty supports m ≤ 3, got {m}")))
        }
    };
    let r = stencil.len() / 2;
    let at = |i: isize| if i < 0 || i as usize >= v.len() { 0.0 } else { v[i as usize] };
    Ok((0..v.len() as isize)
        .map(|i| {
            let s: f64 = stencil.iter().enumerate().map(|(j, c)| c * at(i + j as isize - r as isize)).sum();
            s / scale
        })
        .collect())
}
