//! Seeded Monte-Carlo runs: sampling, contamination, ISE, and the iterated
//! choice of α.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Gamma, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{sped_estimate, trapezoid, DensityCurve, EstimatorError};
use crate::fourier::{ErrorModel, PilotEstimate, TargetDensity, UniformGrid};
use crate::mise::{minimize_log, sped_cutoff, sped_multiplier, truncation, MiseError, MiseEstimator, MiseSetting, SpectralTable};
use crate::multiplier::{Multiplier, MultiplierError, RateSpec};
use crate::spline::{spline_estimate, SplineError, SplineSpace};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("replicate {replicate}: {source}")]
    Estimator { replicate: usize, source: EstimatorError },

    #[error("replicate {replicate}: {source}")]
    Spline { replicate: usize, source: SplineError },

    #[error(transparent)]
    Mise(#[from] MiseError),

    #[error(transparent)]
    Multiplier(#[from] MultiplierError),

    #[error("iterate is not a density: |f̃(0) − 1| = {0}")]
    NonDensityIterate(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl SimError {
    pub fn name(&self) -> &'static str {
        match self {
            SimError::Estimator { source, .. } => source.name(),
            SimError::Spline { source, .. } => source.name(),
            SimError::Mise(e) => e.name(),
            SimError::Multiplier(e) => e.name(),
            SimError::NonDensityIterate(_) => "NonDensityIterate",
            SimError::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

/// Random stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_gamma(rng: &mut impl Rng, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("validated gamma parameters").sample(rng)
}

fn pick<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.enumerate() {
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// `n` i.i.d. draws from `target`; mixtures pick a component first.
pub fn sample_target(target: &TargetDensity, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|_| match target {
            TargetDensity::StdNormal => std_normal.sample(rng),
            TargetDensity::NormalVarianceCase { variance } => variance.sqrt() * std_normal.sample(rng),
            TargetDensity::NormalMixture(cs) => {
                let c = &cs[pick(rng, cs.iter().map(|c| c.weight))];
                c.mean + c.sd * std_normal.sample(rng)
            }
            TargetDensity::Gamma { shape, rate } => draw_gamma(rng, *shape, *rate),
            TargetDensity::GammaMixture(cs) => {
                let c = &cs[pick(rng, cs.iter().map(|c| c.weight))];
                draw_gamma(rng, c.shape, c.rate)
            }
        })
        .collect()
}

/// One draw from the error law.
pub fn sample_error(error: &ErrorModel, rng: &mut impl Rng) -> f64 {
    match *error {
        ErrorModel::Gaussian { sigma } => sigma * Normal::new(0.0, 1.0).expect("unit normal").sample(rng),
        ErrorModel::Laplace { scale } => {
            // Inverse CDF on u ∈ (−½, ½).
            let u: f64 = rng.random::<f64>() - 0.5;
            -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
        }
        ErrorModel::Cauchy { scale } => Cauchy::new(0.0, scale).expect("positive scale").sample(rng),
        ErrorModel::Uniform { half_width } => {
            Uniform::new(-half_width, half_width).expect("positive width").sample(rng)
        }
    }
}

/// `Y_j = X_j + E_j`.
pub fn contaminate(xs: &[f64], error: &ErrorModel, rng: &mut impl Rng) -> Vec<f64> {
    xs.iter().map(|x| x + sample_error(error, rng)).collect()
}

/// Trapezoid `∫(curve − f)²` over the curve's grid.
pub fn ise(curve: &DensityCurve, truth: &TargetDensity) -> f64 {
    let sq: Vec<f64> =
        curve.values.iter().enumerate().map(|(k, v)| (v - truth.density(curve.grid.point(k))).powi(2)).collect();
    trapezoid(&sq, curve.grid.step)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub alpha0: f64,
    /// Relative change in α that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig { alpha0: 1e-2, tol: 1e-3, max_iter: 50 }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(SimError::InvalidParameter(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(SimError::InvalidParameter(format!("tol must lie in (0,1), got {}", self.tol)));
        }
        if self.max_iter > 100 {
            return Err(SimError::InvalidParameter(format!("max_iter {} exceeds 100", self.max_iter)));
        }
        Ok(())
    }
}

/// How the current estimate is computed inside the tuning loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TuneMode {
    /// Exact Fourier-domain estimate.
    Exact,
    /// Spline estimate; `project` selects whether the projected coefficients
    /// define the surrogate density.
    Spline { space: SplineSpace, project: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub alpha: f64,
    pub iterations: usize,
    pub converged: bool,
    /// α after each iteration, starting with `alpha0`.
    pub path: Vec<f64>,
    /// Which estimate fed the surrogate: "exact", "spline" or "projected spline".
    pub surrogate: String,
}

const ALPHA_RANGE: (f64, f64) = (1e-10, 1e4);

/// `|f̃_est(ω)|²` of the current estimate and a frequency beyond which it is
/// negligible.
fn estimate_spectrum(
    sample: &[f64],
    error: &ErrorModel,
    m: u32,
    alpha: f64,
    mode: &TuneMode,
) -> Result<(Box<dyn Fn(f64) -> f64 + Sync + Send>, f64), SimError> {
    let pilot = PilotEstimate::empirical_cf(sample.to_vec())
        .map_err(|e| SimError::Estimator { replicate: 0, source: e.into() })?;
    match *mode {
        TuneMode::Exact => {
            let error = *error;
            let cutoff = sped_cutoff(Some(&error), m, alpha)?;
            Ok((Box::new(move |w| (sped_multiplier(Some(&error), m, alpha, w) * pilot.ft(w)).norm_sqr()), cutoff))
        }
        TuneMode::Spline { space, project } => {
            let grid = UniformGrid::new(space.a, space.b, 16).expect("valid interval");
            let fit = spline_estimate(&pilot, Some(error), alpha, &space, &grid, project)
                .map_err(|e| SimError::Spline { replicate: 0, source: e })?;
            let theta: DVector<f64> = fit.projected.unwrap_or(fit.theta);
            let mass = theta.sum();
            if (mass - 1.0).abs() > 0.05 {
                return Err(SimError::NonDensityIterate((mass - 1.0).abs()));
            }
            let delta = space.spacing();
            let centers: Vec<f64> = (0..space.q).map(|i| space.center(i)).collect();
            let spectrum = move |w: f64| {
                let s = crate::fourier::sinc(0.5 * w * delta).powi(4);
                let sum: Complex64 =
                    theta.iter().zip(&centers).map(|(t, c)| Complex64::from_polar(*t, -w * c)).sum();
                (sum * s).norm_sqr()
            };
            let cutoff = truncation(|w| crate::fourier::sinc(0.5 * w * delta).powi(8) * mass * mass)?;
            Ok((Box::new(spectrum), cutoff))
        }
    }
}

/// Iterated α choice: treat the current estimate as the truth, minimize the
/// resulting MISE over α, repeat until α settles.
pub fn tune_alpha(
    sample: &[f64],
    error: &ErrorModel,
    m: u32,
    mode: TuneMode,
    config: &TuningConfig,
) -> Result<TuneResult, SimError> {
    config.validate()?;
    if sample.is_empty() {
        return Err(SimError::InvalidParameter("empty sample".into()));
    }
    let surrogate = match mode {
        TuneMode::Exact => "exact",
        TuneMode::Spline { project: true, .. } => "projected spline",
        TuneMode::Spline { project: false, .. } => "spline",
    }
    .to_string();
    let n = sample.len() as u64;
    let mut alpha = config.alpha0;
    let mut path = vec![alpha];
    for iter in 1..=config.max_iter {
        let (spectrum, cutoff) = estimate_spectrum(sample, error, m, alpha, &mode)?;
        let table = SpectralTable::for_sped(spectrum, cutoff, Some(error), m, ALPHA_RANGE.0 * 1e-4)?;
        let best = minimize_log(
            |a| Ok(table.sped_terms(Some(error), m, a).total(n)),
            ALPHA_RANGE.0,
            ALPHA_RANGE.1,
            "alpha",
        )?;
        let change = (best.argmin - alpha).abs() / alpha;
        alpha = best.argmin;
        path.push(alpha);
        if change <= config.tol {
            return Ok(TuneResult { alpha, iterations: iter, converged: true, path, surrogate });
        }
    }
    Ok(TuneResult { alpha, iterations: config.max_iter, converged: config.max_iter == 0, path, surrogate })
}

/// How α is chosen in a simulation.
#[derive(Clone, Debug, PartialEq)]
pub enum AlphaRule {
    Fixed(f64),
    RateRule(RateSpec),
    Tuned(TuningConfig),
}

/// Estimator computed in each replicate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SimMethod {
    Fourier,
    Spline { q: usize, project: bool },
}

#[derive(Clone, Debug)]
pub struct SimPlan {
    /// Target, error, `n`, and SPeD order (the estimator must be SPeD).
    pub setting: MiseSetting,
    pub n_sim: usize,
    pub seed: u64,
    pub grid: UniformGrid,
    pub alpha_rule: AlphaRule,
    pub method: SimMethod,
}

impl SimPlan {
    /// Plan with the default grid: 1024 points over the target's effective
    /// support widened by four error spreads.
    pub fn new(setting: MiseSetting, n_sim: usize, seed: u64, alpha_rule: AlphaRule) -> Result<Self, SimError> {
        let grid = default_grid(&setting.target, setting.error.as_ref());
        let plan = SimPlan { setting, n_sim, seed, grid, alpha_rule, method: SimMethod::Fourier };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_method(mut self, method: SimMethod) -> Self {
        self.method = method;
        self
    }

    fn order(&self) -> Result<u32, SimError> {
        match self.setting.estimator {
            MiseEstimator::Sped { m } => Ok(m),
            ref other => Err(SimError::InvalidParameter(format!("simulation runs SPeD, not {other}"))),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_sim == 0 {
            return Err(SimError::InvalidParameter("n_sim must be at least 1".into()));
        }
        if self.setting.error.is_none() {
            return Err(SimError::InvalidParameter("simulation needs a measurement error".into()));
        }
        self.order()?;
        if let AlphaRule::Tuned(c) = &self.alpha_rule {
            c.validate()?;
        }
        if let AlphaRule::Fixed(a) = self.alpha_rule {
            if !(a > 0.0 && a.is_finite()) {
                return Err(SimError::InvalidParameter(format!("alpha must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_GRID_POINTS: usize = 1024;

pub fn default_grid(target: &TargetDensity, error: Option<&ErrorModel>) -> UniformGrid {
    let (lo, hi) = target.effective_support();
    let pad = 4.0 * error.map(|e| e.spread()).unwrap_or(0.0);
    UniformGrid::new(lo - pad, hi + pad, DEFAULT_GRID_POINTS).expect("nonempty support")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_ise: f64,
    /// Standard error of the mean; `None` for a single replicate.
    pub se: Option<f64>,
    pub per_rep: Vec<f64>,
    /// α used in each replicate.
    pub alphas: Vec<f64>,
}

/// Runs `n_sim` replicates in parallel. Replicate `r` draws from stream `r`
/// of the generator seeded by `seed`, so results do not depend on threads.
pub fn run_mise_sim(plan: &SimPlan) -> Result<SimResult, SimError> {
    plan.validate()?;
    let m = plan.order()?;
    let error = plan.setting.error.expect("validated");
    let n = plan.setting.n as usize;
    let reps: Vec<(f64, f64)> = (0..plan.n_sim)
        .into_par_iter()
        .map(|r| run_replicate(plan, r, m, &error, n))
        .collect::<Result<_, _>>()?;
    let per_rep: Vec<f64> = reps.iter().map(|r| r.0).collect();
    let alphas = reps.iter().map(|r| r.1).collect();
    let count = per_rep.len() as f64;
    let mean_ise = per_rep.iter().sum::<f64>() / count;
    let se = (plan.n_sim > 1).then(|| {
        let var = per_rep.iter().map(|v| (v - mean_ise).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    });
    Ok(SimResult { mean_ise, se, per_rep, alphas })
}

fn run_replicate(plan: &SimPlan, r: usize, m: u32, error: &ErrorModel, n: usize) -> Result<(f64, f64), SimError> {
    let mut rng = stream_rng(plan.seed, r as u64);
    let xs = sample_target(&plan.setting.target, n, &mut rng);
    let ys = contaminate(&xs, error, &mut rng);
    let space = match plan.method {
        SimMethod::Spline { q, .. } => Some(
            SplineSpace::new(plan.grid.start, plan.grid.end(), q).map_err(|e| SimError::Spline { replicate: r, source: e })?,
        ),
        SimMethod::Fourier => None,
    };
    let alpha = match &plan.alpha_rule {
        AlphaRule::Fixed(a) => *a,
        AlphaRule::RateRule(spec) => spec.rate_alpha(),
        AlphaRule::Tuned(config) => {
            let mode = match (plan.method, space) {
                (SimMethod::Spline { project, .. }, Some(space)) => TuneMode::Spline { space, project },
                _ => TuneMode::Exact,
            };
            tune_alpha(&ys, error, m, mode, config).map_err(|e| attach(e, r))?.alpha
        }
    };
    let pilot = PilotEstimate::empirical_cf(ys).map_err(|e| SimError::Estimator { replicate: r, source: e.into() })?;
    let curve = match (plan.method, space) {
        (SimMethod::Spline { project, .. }, Some(space)) => {
            spline_estimate(&pilot, Some(error), alpha, &space, &plan.grid, project)
                .map_err(|e| SimError::Spline { replicate: r, source: e })?
                .curve
        }
        _ => {
            let mult = Multiplier::new(alpha, m, *error)?;
            sped_estimate(&pilot, &mult, &plan.grid).map_err(|e| SimError::Estimator { replicate: r, source: e })?
        }
    };
    Ok((ise(&curve, &plan.setting.target), alpha))
}

fn attach(e: SimError, replicate: usize) -> SimError {
    match e {
        SimError::Estimator { source, .. } => SimError::Estimator { replicate, source },
        SimError::Spline { source, .. } => SimError::Spline { replicate, source },
        other => other,
    }
}
