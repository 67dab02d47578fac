//! Three operations for the static demo page. Each returns a JSON string so
//! the page can plot it directly. The plain functions are usable natively;
//! the `wasm_bindgen` wrappers only translate errors.

use serde::Serialize;
use sped::fourier::{BenchmarkSetting, ErrorFamily, ErrorModel, PilotEstimate, UniformGrid};
use sped::mise::{min_mise, mise, MiseEstimator, MiseSetting};
use sped::multiplier::Multiplier;
use sped::spline::{default_interval, spline_estimate, SplineSpace};
use wasm_bindgen::prelude::*;

const GRID_POINTS: usize = 256;

#[derive(Debug, Serialize)]
pub struct Estimate {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub integral: f64,
    pub interval: [f64; 2],
}

#[derive(Debug, Serialize)]
pub struct MiseCurve {
    pub alpha: Vec<f64>,
    pub mise: Vec<f64>,
    pub argmin: f64,
    pub min: f64,
}

#[derive(Debug, Serialize)]
pub struct MultiplierCurve {
    pub omega: Vec<f64>,
    pub multiplier: Vec<f64>,
    /// `φ̃_α g̃`, how much of each frequency survives.
    pub transfer: Vec<f64>,
    pub error_cf: Vec<f64>,
}

/// Numbers separated by whitespace or commas.
pub fn parse_sample(text: &str) -> Result<Vec<f64>, String> {
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() < 2 {
        return Err("need at least two observations".into());
    }
    Ok(values)
}

/// Projected spline SPeD estimate under Gaussian error with s.d. `error_sd`.
pub fn estimate(sample: &[f64], error_sd: f64, alpha: f64, q: usize) -> Result<Estimate, String> {
    let error = ErrorModel::gaussian(error_sd).map_err(|e| e.to_string())?;
    Multiplier::new(alpha, 2, error).map_err(|e| e.to_string())?;
    let pilot = PilotEstimate::empirical_cf(sample.to_vec()).map_err(|e| e.to_string())?;
    let (a, b) = default_interval(&pilot, Some(&error));
    let space = SplineSpace::new(a, b, q).map_err(|e| e.to_string())?;
    let grid = UniformGrid::new(a, b, GRID_POINTS).map_err(|e| e.to_string())?;
    let fit = spline_estimate(&pilot, Some(&error), alpha, &space, &grid, true).map_err(|e| e.to_string())?;
    Ok(Estimate { x: fit.curve.xs(), integral: fit.curve.integral(), density: fit.curve.values, interval: [a, b] })
}

/// Exact MISE of SPeD (m = 2) against α for a benchmark setting.
pub fn mise_table(setting: &str, p: f64, n: u64, points: usize) -> Result<MiseCurve, String> {
    let setting: BenchmarkSetting = setting.parse().map_err(|e: sped::fourier::FourierError| e.to_string())?;
    let s = MiseSetting::calibrated(setting.target(), p, ErrorFamily::Gaussian, n, MiseEstimator::Sped { m: 2 })
        .map_err(|e| e.to_string())?;
    let points = points.clamp(2, 400);
    let (lo, hi): (f64, f64) = (1e-8, 1e2);
    let alpha: Vec<f64> = (0..points).map(|k| lo * (hi / lo).powf(k as f64 / (points - 1) as f64)).collect();
    let values = alpha.iter().map(|&a| mise(&s, a).map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?;
    let best = min_mise(&s).map_err(|e| e.to_string())?;
    Ok(MiseCurve { alpha, mise: values, argmin: best.argmin, min: best.value })
}

/// The multiplier and its transfer function under Gaussian error.
pub fn multiplier_table(error_sd: f64, alpha: f64, m: u32, omega_max: f64, points: usize) -> Result<MultiplierCurve, String> {
    let error = ErrorModel::gaussian(error_sd).map_err(|e| e.to_string())?;
    let mult = Multiplier::new(alpha, m, error).map_err(|e| e.to_string())?;
    if !(omega_max > 0.0 && omega_max.is_finite()) {
        return Err(format!("omega_max must be positive, got {omega_max}"));
    }
    let points = points.clamp(2, 4000);
    let omega: Vec<f64> = (0..points).map(|k| omega_max * k as f64 / (points - 1) as f64).collect();
    Ok(MultiplierCurve {
        multiplier: omega.iter().map(|&w| mult.value(w)).collect(),
        transfer: omega.iter().map(|&w| mult.transfer(w)).collect(),
        error_cf: omega.iter().map(|&w| error.cf(w)).collect(),
        omega,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn estimate_density(sample: &str, error_sd: f64, alpha: f64, q: usize) -> Result<String, JsError> {
    to_json(parse_sample(sample).and_then(|s| estimate(&s, error_sd, alpha, q)))
}

#[wasm_bindgen]
pub fn mise_curve(setting: &str, p: f64, n: u32, points: usize) -> Result<String, JsError> {
    to_json(mise_table(setting, p, n as u64, points))
}

#[wasm_bindgen]
pub fn multiplier_curve(error_sd: f64, alpha: f64, m: u32, omega_max: f64, points: usize) -> Result<String, JsError> {
    to_json(multiplier_table(error_sd, alpha, m, omega_max, points))
}
