use serde::Serialize;
use sped::estimator::{dke_estimate, pilot_label, sped_estimate, sped_estimate_with, DensityCurve};
use sped::fourier::{
    BenchmarkSetting, ErrorFamily, ErrorModel, FourierError, FrequencyQuadrature, NamedKernel, PilotEstimate,
    QuadratureRule, UniformGrid,
};
use sped::mise::{
    min_mise, mise, reference_mise, equivalent_n_to, EquivalentN, MiseError, MiseEstimator, MiseSetting,
};
use sped::multiplier::{Multiplier, RateFamily, RateSpec};
use sped::sim::{run_mise_sim, tune_alpha, AlphaRule, SimMethod, SimPlan, TuneMode, TuneResult, TuningConfig};
use sped::spline::{default_interval, spline_estimate, SplineSpace};
use sped::theory::{default_suite, SuiteOptions};

use crate::args::{
    AlphaRuleKind, CheckArgs, DeconvolveArgs, ErrorArgs, EquivNArgs, EstimatorKind, Method, MiseCurveArgs,
    PilotKind, SettingArgs, SimulateArgs, TuneArgs,
};
use crate::error::CliError;
use crate::io::{read_sample, sidecar_path, write_csv, write_json, write_json_lines};

/// Error share assumed by `deconvolve` and `tune` when neither `--p` nor
/// `--error-scale` is given.
pub const DEFAULT_P: f64 = 0.045;

/// Settings read from the environment.
#[derive(Clone, Copy, Debug, Default)]
pub struct Env {
    /// Overrides the node density of the Fourier inversion.
    pub quad_resolution: Option<usize>,
}

impl Env {
    pub fn from_env() -> Result<Self, CliError> {
        let Ok(raw) = std::env::var("SPED_QUAD_RESOLUTION") else {
            return Ok(Env::default());
        };
        let res: usize = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("SPED_QUAD_RESOLUTION must be an integer, got '{raw}'")))?;
        if res < 16 {
            let e = FourierError::BadResolution(res);
            return Err(CliError::Config { name: e.name(), message: format!("SPED_QUAD_RESOLUTION: {e}") });
        }
        Ok(Env { quad_resolution: Some(res) })
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Silverman's rule `0.9·min(sd, IQR/1.34)·n^{-1/5}`.
pub fn silverman_bandwidth(sample: &[f64]) -> f64 {
    let (_, var) = mean_var(sample);
    let sd = var.sqrt();
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        let next = sorted[(i + 1).min(sorted.len() - 1)];
        sorted[i] + frac * (next - sorted[i])
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (sample.len() as f64).powf(-0.2);
    if h > 0.0 { h } else { 1.0 }
}

/// The error law given by `--error-scale`, or by `--p` as a share of the
/// observed variance.
fn resolve_error(args: &ErrorArgs, observed_var: f64) -> Result<Option<ErrorModel>, CliError> {
    if let Some(scale) = args.error_scale {
        return Ok(Some(ErrorModel::from_scale(args.error, scale)?));
    }
    let p = args.p.unwrap_or(DEFAULT_P);
    if !(0.0..1.0).contains(&p) {
        return Err(FourierError::InvalidParameter(format!("error proportion p must lie in [0,1), got {p}")).into());
    }
    if p == 0.0 {
        return Ok(None);
    }
    Ok(Some(ErrorModel::with_variance(args.error, p * observed_var)?))
}

fn build_pilot(kind: PilotKind, sample: &[f64], kernel: &NamedKernel, bandwidth: Option<f64>) -> Result<PilotEstimate, CliError> {
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(sample));
    Ok(match kind {
        PilotKind::Ecf => PilotEstimate::empirical_cf(sample.to_vec())?,
        PilotKind::Kde => PilotEstimate::kde(sample.to_vec(), kernel.clone(), h)?,
        PilotKind::Hist => {
            let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(h > 0.0 && h.is_finite()) {
                return Err(FourierError::InvalidParameter(format!("bin width must be > 0, got {h}")).into());
            }
            let bins = (((hi - lo) / h).ceil() as usize).max(1);
            PilotEstimate::histogram_from_sample(sample, bins)?
        }
    })
}

fn interval(given: &Option<Vec<f64>>, fallback: impl FnOnce() -> (f64, f64)) -> Result<(f64, f64), CliError> {
    match given.as_deref() {
        Some([a, b]) if a < b => Ok((*a, *b)),
        Some(v) => Err(CliError::Usage(format!("--interval needs A < B, got {v:?}"))),
        None => Ok(fallback()),
    }
}

fn rate_family(rule: AlphaRuleKind) -> Option<RateFamily> {
    match rule {
        AlphaRuleKind::Normal => Some(RateFamily::Normal),
        AlphaRuleKind::Cauchy => Some(RateFamily::Cauchy),
        AlphaRuleKind::Laplace => Some(RateFamily::Laplace),
        _ => None,
    }
}

fn rule_name(rule: AlphaRuleKind) -> &'static str {
    match rule {
        AlphaRuleKind::Fixed => "fixed",
        AlphaRuleKind::Normal => "normal",
        AlphaRuleKind::Cauchy => "cauchy",
        AlphaRuleKind::Laplace => "laplace",
        AlphaRuleKind::Tuned => "tuned",
    }
}

/// Rate rule for sample size `n`, taking the pilot MISE to be `1/n`.
fn rate_spec(rule: AlphaRuleKind, k: u32, m: u32, n: usize, error: Option<&ErrorModel>) -> Result<(RateSpec, Vec<String>), CliError> {
    let family = rate_family(rule).expect("rate rule");
    let spec = RateSpec::new(family, k, m, 1.0 / n as f64)?;
    let mut warnings = spec.warnings();
    if error.and_then(|e| RateFamily::from_error_family(e.family())) != Some(family) {
        warnings.push(format!("alpha rule '{}' does not match the error family", rule_name(rule)));
    }
    Ok((spec, warnings))
}

#[derive(Serialize)]
struct CurveRow {
    x: f64,
    density: f64,
}

#[derive(Serialize)]
struct DeconvolveMeta {
    estimator: String,
    method: Option<&'static str>,
    alpha: Option<f64>,
    alpha_rule: Option<&'static str>,
    bandwidth: Option<f64>,
    m: Option<u32>,
    q: Option<usize>,
    interval: [f64; 2],
    projection: bool,
    integral: f64,
    n: usize,
    error: Option<ErrorModel>,
    pilot: String,
    tuning: Option<TuneResult>,
    warnings: Vec<String>,
}

/// `|x − y|` over the grid and the data, bounding the phase of the spectrum.
fn phase_extent(grid: &UniformGrid, (lo, hi): (f64, f64)) -> f64 {
    (grid.end() - lo).abs().max((hi - grid.start).abs()).max(1.0)
}

fn fourier_sped(pilot: &PilotEstimate, mult: &Multiplier, grid: &UniformGrid, env: Env) -> Result<DensityCurve, CliError> {
    let Some(resolution) = env.quad_resolution else {
        return Ok(sped_estimate(pilot, mult, grid)?);
    };
    if !pilot.is_smoothed() && mult.m() < 2 {
        // Let the estimator report the inadmissible pilot.
        return Ok(sped_estimate(pilot, mult, grid)?);
    }
    let auto = FrequencyQuadrature::for_envelope(
        |w| mult.value(w).abs() * pilot.ft_envelope(w),
        phase_extent(grid, pilot.data_range()),
    )?;
    let quad = FrequencyQuadrature::build(auto.omega_max(), resolution, QuadratureRule::GaussLegendrePanels)?;
    Ok(sped_estimate_with(pilot, mult, &quad, grid)?)
}

pub fn deconvolve(a: &DeconvolveArgs, env: Env) -> Result<(), CliError> {
    let sample = read_sample(&a.input)?;
    let (_, var_y) = mean_var(&sample);
    let error = resolve_error(&a.error, var_y)?;
    let n = sample.len();
    let mut warnings = Vec::new();

    let kde_pilot = |kernel: &NamedKernel| build_pilot(PilotKind::Kde, &sample, kernel, a.bandwidth);
    let pilot = match a.estimator {
        EstimatorKind::Sped => build_pilot(a.pilot, &sample, &a.kernel, a.bandwidth)?,
        EstimatorKind::Dke | EstimatorKind::Kde => kde_pilot(&a.kernel)?,
    };
    let (lo, hi) = interval(&a.interval, || default_interval(&pilot, error.as_ref()))?;
    let grid = UniformGrid::new(lo, hi, a.grid_points)?;

    let mut meta = DeconvolveMeta {
        estimator: String::new(),
        method: None,
        alpha: None,
        alpha_rule: None,
        bandwidth: None,
        m: None,
        q: None,
        interval: [lo, hi],
        projection: false,
        integral: 0.0,
        n,
        error,
        pilot: pilot_label(&pilot),
        tuning: None,
        warnings: Vec::new(),
    };

    let curve = match a.estimator {
        EstimatorKind::Sped => {
            let rule = a.alpha_rule.unwrap_or(if a.alpha.is_some() { AlphaRuleKind::Fixed } else { AlphaRuleKind::Tuned });
            let space = match a.method {
                Method::Spline => Some(SplineSpace::new(lo, hi, a.q)?),
                Method::Fourier => None,
            };
            let alpha = match rule {
                AlphaRuleKind::Fixed => a.alpha.ok_or_else(|| CliError::Usage("--alpha-rule fixed needs --alpha".into()))?,
                AlphaRuleKind::Tuned => {
                    let e = error.ok_or_else(|| CliError::Usage("tuning α needs a measurement error".into()))?;
                    let mode = match space {
                        Some(space) => TuneMode::Spline { space, project: a.project.is_on() },
                        None => TuneMode::Exact,
                    };
                    let config = TuningConfig { alpha0: a.alpha.unwrap_or(TuningConfig::default().alpha0), ..TuningConfig::default() };
                    let t = tune_alpha(&sample, &e, a.m, mode, &config)?;
                    if !t.converged {
                        warnings.push(format!("α tuning did not converge in {} iterations", t.iterations));
                    }
                    let alpha = t.alpha;
                    meta.tuning = Some(t);
                    alpha
                }
                rate => {
                    let (spec, w) = rate_spec(rate, a.k, a.m, n, error.as_ref())?;
                    warnings.extend(w);
                    spec.rate_alpha()
                }
            };
            // Validates α and m before any work.
            let mult = Multiplier::with_optional_error(alpha, a.m, error)?;
            meta.alpha = Some(alpha);
            meta.alpha_rule = Some(rule_name(rule));
            meta.m = Some(a.m);
            match space {
                Some(space) => {
                    let fit = spline_estimate(&pilot, error.as_ref(), alpha, &space, &grid, a.project.is_on())?;
                    meta.estimator = "sped".into();
                    meta.method = Some("spline");
                    meta.q = Some(a.q);
                    meta.projection = a.project.is_on();
                    fit.curve
                }
                None => {
                    meta.estimator = "sped".into();
                    meta.method = Some("fourier");
                    fourier_sped(&pilot, &mult, &grid, env)?
                }
            }
        }
        EstimatorKind::Dke | EstimatorKind::Kde => {
            let err = if a.estimator == EstimatorKind::Dke { error.as_ref() } else { None };
            let curve = dke_estimate(&pilot, err, &grid)?;
            meta.estimator = if err.is_some() { "dke".into() } else { "kde".into() };
            meta.bandwidth = curve.meta.tuning;
            curve
        }
    };

    warnings.extend(curve.meta.warnings.iter().cloned());
    meta.integral = curve.integral();
    meta.warnings = warnings;
    let rows: Vec<CurveRow> = curve.xs().into_iter().zip(&curve.values).map(|(x, &density)| CurveRow { x, density }).collect();
    write_csv(Some(&a.output), &["x", "density"], &rows)?;
    write_json(Some(&sidecar_path(&a.output)), &meta)
}

fn mise_estimator(kind: EstimatorKind, m: u32, kernel: Option<NamedKernel>) -> MiseEstimator {
    match kind {
        EstimatorKind::Sped => MiseEstimator::Sped { m },
        EstimatorKind::Dke => MiseEstimator::Dke { kernel: kernel.unwrap_or(NamedKernel::DkeDefault) },
        EstimatorKind::Kde => MiseEstimator::ErrorFreeKde { kernel: kernel.unwrap_or(NamedKernel::ErrorFree) },
    }
}

fn setting_from(s: &SettingArgs, estimator: MiseEstimator) -> Result<MiseSetting, CliError> {
    Ok(MiseSetting::calibrated(s.target.target(), s.p, s.error, s.n, estimator)?)
}

fn estimator_name(e: &MiseEstimator) -> String {
    match e {
        MiseEstimator::Sped { .. } => "sped".into(),
        MiseEstimator::Dke { kernel } => format!("dke({})", kernel.name()),
        MiseEstimator::ErrorFreeKde { kernel } => format!("kde({})", kernel.name()),
    }
}

#[derive(Serialize)]
struct MiseRow {
    tuning_param: f64,
    mise: f64,
}

#[derive(Serialize)]
struct MiseCurveMeta {
    setting: BenchmarkSetting,
    p: f64,
    error: ErrorFamily,
    n: u64,
    estimator: String,
    tuning_name: &'static str,
    argmin: f64,
    min_mise: f64,
}

pub fn mise_curve(a: &MiseCurveArgs) -> Result<(), CliError> {
    if a.points < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    let estimator = mise_estimator(a.estimator, a.setting.m, a.kernel.clone());
    let setting = setting_from(&a.setting, estimator)?;
    let best = min_mise(&setting)?;
    let (lo, hi) = setting.estimator.tuning_range();
    let mut rows = Vec::with_capacity(a.points + 1);
    for k in 0..a.points {
        let t = lo * (hi / lo).powf(k as f64 / (a.points - 1) as f64);
        let v = match mise(&setting, t) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(MiseError::Fourier(FourierError::TailTooFat { .. })) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        rows.push(MiseRow { tuning_param: t, mise: v });
    }
    rows.push(MiseRow { tuning_param: best.argmin, mise: best.value });
    rows.sort_by(|x, y| x.tuning_param.total_cmp(&y.tuning_param));
    write_csv(Some(&a.output), &["tuning_param", "mise"], &rows)?;
    let meta = MiseCurveMeta {
        setting: a.setting.target,
        p: a.setting.p,
        error: a.setting.error,
        n: a.setting.n,
        estimator: estimator_name(&setting.estimator),
        tuning_name: setting.estimator.tuning_name(),
        argmin: best.argmin,
        min_mise: best.value,
    };
    write_json(Some(&sidecar_path(&a.output)), &meta)
}

#[derive(Serialize)]
struct EquivRow {
    setting: String,
    p: f64,
    estimator: String,
    reference_kernel: String,
    n_equiv: String,
}

/// Table token for an equivalent sample size.
pub fn equiv_token(e: EquivalentN) -> String {
    match e {
        EquivalentN::Found(n) => n.to_string(),
        EquivalentN::Exceeded => ">1e6".into(),
    }
}

pub fn equiv_n(a: &EquivNArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for &target in &a.target {
        let t = target.target();
        for ref_kernel in &a.ref_kernel {
            let reference = reference_mise(&t, a.ref_n, ref_kernel)?.value;
            for &p in &a.p {
                for &kind in &a.estimator {
                    let estimator = mise_estimator(kind, a.m, Some(a.kernel.clone()));
                    let setting = MiseSetting::calibrated(t.clone(), p, a.error, a.ref_n, estimator.clone())?;
                    let found = equivalent_n_to(&setting, reference, a.ref_n)?;
                    rows.push(EquivRow {
                        setting: target.to_string(),
                        p,
                        estimator: estimator_name(&estimator),
                        reference_kernel: ref_kernel.name().to_string(),
                        n_equiv: equiv_token(found),
                    });
                }
            }
        }
    }
    write_csv(a.output.as_deref(), &["setting", "p", "estimator", "reference_kernel", "n_equiv"], &rows)
}

pub fn tune(a: &TuneArgs) -> Result<(), CliError> {
    let sample = read_sample(&a.input)?;
    let (_, var_y) = mean_var(&sample);
    let error = resolve_error(&a.error, var_y)?
        .ok_or_else(|| CliError::Usage("tuning α needs a measurement error".into()))?;
    let mode = match a.method {
        Method::Fourier => TuneMode::Exact,
        Method::Spline => {
            let pilot = PilotEstimate::empirical_cf(sample.clone())?;
            let (lo, hi) = interval(&a.interval, || default_interval(&pilot, Some(&error)))?;
            TuneMode::Spline { space: SplineSpace::new(lo, hi, a.q)?, project: a.project.is_on() }
        }
    };
    let config = TuningConfig { alpha0: a.alpha, tol: a.tol, max_iter: a.max_iter };
    let result = tune_alpha(&sample, &error, a.m, mode, &config)?;
    write_json(a.output.as_deref(), &result)
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let setting = setting_from(&a.setting, MiseEstimator::Sped { m: a.setting.m })?;
    let rule = a.alpha_rule.unwrap_or(if a.alpha.is_some() { AlphaRuleKind::Fixed } else { AlphaRuleKind::Tuned });
    let alpha_rule = match rule {
        AlphaRuleKind::Fixed => {
            AlphaRule::Fixed(a.alpha.ok_or_else(|| CliError::Usage("--alpha-rule fixed needs --alpha".into()))?)
        }
        AlphaRuleKind::Tuned => {
            AlphaRule::Tuned(TuningConfig { alpha0: a.alpha.unwrap_or(TuningConfig::default().alpha0), ..TuningConfig::default() })
        }
        rate => AlphaRule::RateRule(rate_spec(rate, a.k, a.setting.m, a.setting.n as usize, setting.error.as_ref())?.0),
    };
    let method = match a.method {
        Method::Fourier => SimMethod::Fourier,
        Method::Spline => SimMethod::Spline { q: a.q, project: a.project.is_on() },
    };
    let plan = SimPlan::new(setting, a.nsim, a.seed, alpha_rule)?.with_method(method);
    let result = run_mise_sim(&plan)?;
    write_json(a.output.as_deref(), &result)
}

pub fn check(a: &CheckArgs) -> Result<(), CliError> {
    let options = SuiteOptions { sup_phi_scale: if a.inject_sup_bug { 0.5 } else { 1.0 } };
    let mut reports = default_suite(&options)?;
    if let Some(f) = &a.filter {
        reports.retain(|r| r.name.contains(f.as_str()));
    }
    write_json_lines(a.output.as_deref(), &reports)?;
    let failed = reports.iter().filter(|r| !r.as_expected()).count();
    if failed > 0 {
        return Err(CliError::CheckFailed { failed, total: reports.len() });
    }
    Ok(())
}
