//! The regularizing multiplier `φ̃_α(ω) = g̃(ω) / (g̃(ω)² + α ω^{2m})`, the
//! Lambert W function, the systematic-error bounds it governs, and the
//! α-selection rules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::{ErrorFamily, ErrorModel};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MultiplierError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("maximizer of {what} sits at the grid boundary ω = {omega}")]
    MaximizerAtBoundary { what: &'static str, omega: f64 },

    #[error("Lambert W needs a nonnegative argument, got {0}")]
    NegativeArgument(f64),
}

impl MultiplierError {
    pub fn name(&self) -> &'static str {
        match self {
            MultiplierError::InvalidParameter(_) => "InvalidParameter",
            MultiplierError::MaximizerAtBoundary { .. } => "MaximizerAtBoundary",
            MultiplierError::NegativeArgument(_) => "NegativeArgument",
        }
    }
}

/// `g̃(ω)`, with `None` standing for error-free data (`g̃ ≡ 1`).
#[inline]
pub fn error_cf(error: Option<&ErrorModel>, omega: f64) -> f64 {
    error.map_or(1.0, |g| g.cf(omega))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    alpha: f64,
    m: u32,
    error: Option<ErrorModel>,
}

impl Multiplier {
    pub fn new(alpha: f64, m: u32, error: ErrorModel) -> Result<Self, MultiplierError> {
        Self::with_optional_error(alpha, m, Some(error))
    }

    /// The multiplier for uncontaminated data, `1/(1 + α ω^{2m})`.
    pub fn error_free(alpha: f64, m: u32) -> Result<Self, MultiplierError> {
        Self::with_optional_error(alpha, m, None)
    }

    pub fn with_optional_error(alpha: f64, m: u32, error: Option<ErrorModel>) -> Result<Self, MultiplierError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(MultiplierError::InvalidParameter(format!("alpha must be finite and > 0, got {alpha}")));
        }
        if m == 0 {
            return Err(MultiplierError::InvalidParameter("penalty order m must be ≥ 1".into()));
        }
        Ok(Multiplier { alpha, m, error })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn error(&self) -> Option<&ErrorModel> {
        self.error.as_ref()
    }

    /// `φ̃_α(ω)`.
    #[inline]
    pub fn value(&self, omega: f64) -> f64 {
        let g = error_cf(self.error.as_ref(), omega);
        if g == 0.0 {
            return 0.0;
        }
        g / (g * g + self.alpha * omega.powi(2 * self.m as i32))
    }

    /// `φ̃_α(ω) g̃(ω)`, the transfer function from `f̃` to `f̃^α`.
    #[inline]
    pub fn transfer(&self, omega: f64) -> f64 {
        let g = error_cf(self.error.as_ref(), omega);
        let g2 = g * g;
        if g2 == 0.0 {
            return 0.0;
        }
        g2 / (g2 + self.alpha * omega.powi(2 * self.m as i32))
    }

    /// Frequency beyond which `|φ̃_α| ≤ 1/(α ω^{2m}) < 1 = φ̃_α(0)`, so the
    /// supremum is attained below it.
    pub fn sup_search_limit(&self) -> f64 {
        2.0 * self.alpha.powf(-1.0 / (2.0 * self.m as f64))
    }

    /// `sup_ω |φ̃_α(ω)|`.
    pub fn sup(&self) -> Result<f64, MultiplierError> {
        let limit = self.sup_search_limit();
        let (_, v) = maximize(|w| self.value(w).abs(), 0.0, limit, "phi_tilde")?;
        Ok(v)
    }
}

const LINEAR_POINTS: usize = 2000;
const LOG_POINTS: usize = 2000;
const MAX_DOUBLINGS: usize = 1;

/// Maximizes `f` over `[lo, hi]` with a dense grid (linear near `lo`,
/// logarithmic further out) and golden-section refinement around the best
/// grid point. When the grid argmax lands in the top 5% of the range the
/// range is doubled; failing again is an error.
pub(crate) fn maximize(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    what: &'static str,
) -> Result<(f64, f64), MultiplierError> {
    let mut hi = hi;
    for attempt in 0..=MAX_DOUBLINGS {
        let grid = search_grid(lo, hi);
        let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
        for (i, &w) in grid.iter().enumerate() {
            let v = f(w);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        if grid[best] >= lo + 0.95 * (hi - lo) {
            if attempt == MAX_DOUBLINGS {
                return Err(MultiplierError::MaximizerAtBoundary { what, omega: grid[best] });
            }
            hi *= 2.0;
            continue;
        }
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(grid.len() - 1)];
        let (x, v) = golden_max(&f, a, b, 1e-12);
        return Ok(if v >= best_v { (x, v) } else { (grid[best], best_v) });
    }
    unreachable!("loop returns on its final attempt")
}

fn search_grid(lo: f64, hi: f64) -> Vec<f64> {
    let knee = (lo + 50.0).min(hi);
    let mut grid: Vec<f64> = (0..=LINEAR_POINTS).map(|i| lo + (knee - lo) * i as f64 / LINEAR_POINTS as f64).collect();
    if hi > knee {
        let ratio = (hi / knee).ln();
        grid.extend((1..=LOG_POINTS).map(|i| knee * (ratio * i as f64 / LOG_POINTS as f64).exp()));
    }
    grid
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub(crate) fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc > fd {
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
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Principal branch of the Lambert W function on `[0, ∞)`.
pub fn lambert_w(x: f64) -> Result<f64, MultiplierError> {
    if x.is_nan() || x < 0.0 {
        return Err(MultiplierError::NegativeArgument(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < std::f64::consts::E {
        x.ln_1p() * (1.0 - x.ln_1p() / (2.0 + x.ln_1p()))
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 1e-15 * w.abs().max(1e-300) {
            break;
        }
    }
    Ok(w)
}

/// Error laws with a closed-form systematic bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFamily {
    Normal,
    Cauchy,
    Laplace,
}

impl RateFamily {
    pub fn unit_error(self) -> ErrorModel {
        match self {
            RateFamily::Normal => ErrorModel::Gaussian { sigma: 1.0 },
            RateFamily::Cauchy => ErrorModel::Cauchy { scale: 1.0 },
            RateFamily::Laplace => ErrorModel::Laplace { scale: 1.0 },
        }
    }

    pub fn from_error_family(family: ErrorFamily) -> Option<Self> {
        match family {
            ErrorFamily::Gaussian => Some(RateFamily::Normal),
            ErrorFamily::Cauchy => Some(RateFamily::Cauchy),
            ErrorFamily::Laplace => Some(RateFamily::Laplace),
            ErrorFamily::Uniform => None,
        }
    }
}

/// Smoothness order `k` of the target, penalty order `m`, and pilot MISE
/// `δ²` for one of the three rate families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub family: RateFamily,
    pub k: u32,
    pub m: u32,
    pub delta_sq: f64,
}

impl RateSpec {
    pub fn new(family: RateFamily, k: u32, m: u32, delta_sq: f64) -> Result<Self, MultiplierError> {
        if m == 0 || k == 0 || k > 2 * m {
            return Err(MultiplierError::InvalidParameter(format!("need 1 ≤ k ≤ 2m, got k={k}, m={m}")));
        }
        if !(delta_sq.is_finite() && delta_sq > 0.0) {
            return Err(MultiplierError::InvalidParameter(format!("delta_sq must be > 0, got {delta_sq}")));
        }
        Ok(RateSpec { family, k, m, delta_sq })
    }

    /// Non-fatal remarks about the regime.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.delta_sq >= 1.0 {
            w.push(format!("delta_sq = {} is not small; the asymptotic rule is not meaningful", self.delta_sq));
        }
        w
    }

    /// The α prescribed for this family.
    pub fn rate_alpha(&self) -> f64 {
        let d2 = self.delta_sq;
        let delta = d2.sqrt();
        let k = self.k as f64;
        let m = self.m as f64;
        match self.family {
            RateFamily::Normal => d2 * lambert_w(delta.powf(-2.0 / k)).expect("positive").powf(k),
            RateFamily::Cauchy => d2 * lambert_w(delta.powf(-1.0 / k)).expect("positive").powf(2.0 * k),
            RateFamily::Laplace => d2.powf((m + 2.0) / (k + 2.0)),
        }
    }
}

/// A systematic-error bound; `in_regime` is false (and `value` infinite)
/// when α is too large for the closed form to apply.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystematicBound {
    pub value: f64,
    pub in_regime: bool,
}

/// Closed-form bound on `‖f^α − f‖²` for unit-scale errors, where
/// `c = (2π)⁻¹ ∫ |ω^k f̃|²`.
pub fn systematic_bound(family: RateFamily, k: u32, m: u32, alpha: f64, c: f64) -> SystematicBound {
    let (k, m) = (k as f64, m as f64);
    let out = |value: f64, ok: bool| {
        if ok {
            SystematicBound { value, in_regime: true }
        } else {
            SystematicBound { value: f64::INFINITY, in_regime: false }
        }
    };
    match family {
        RateFamily::Normal => {
            let arg = 1.0 / (m * alpha.powf(1.0 / m));
            let w = lambert_w(arg).unwrap_or(f64::NAN);
            out(c / (m.powf(k) * w.powf(k)), arg > 1.0)
        }
        RateFamily::Cauchy => {
            let arg = alpha.powf(-1.0 / (2.0 * m)) / m;
            let w = lambert_w(arg).unwrap_or(f64::NAN);
            out(c / (m.powf(2.0 * k) * w.powf(2.0 * k)), arg > 1.0)
        }
        RateFamily::Laplace => out(c * (4.0 * alpha).powf(k / (m + 2.0)), 4.0 * alpha <= 1.0),
    }
}

/// `sup_{ω>0} θ(ω)²` with `θ(ω) = α ω^{2m−k} / (g̃(ω)² + α ω^{2m})`, the
/// quantity the closed-form bound controls.
pub fn theta_sup_numeric(error: &ErrorModel, k: u32, m: u32, alpha: f64) -> Result<f64, MultiplierError> {
    if !(alpha > 0.0) || k == 0 || k > 2 * m {
        return Err(MultiplierError::InvalidParameter(format!("bad (k={k}, m={m}, alpha={alpha})")));
    }
    let theta_sq = |t: f64| {
        let w = t.exp();
        let g = error.cf(w);
        let th = alpha * w.powi((2 * m - k) as i32) / (g * g + alpha * w.powi(2 * m as i32));
        th * th
    };
    // Beyond ω₁ = α^{-1/(2m)}, θ ≤ ω^{-k} is decreasing; the crossover where
    // g̃² ~ αω^{2m} is always below max(ω₁, a few scales).
    let hi = (4.0 * alpha.powf(-1.0 / (2.0 * m as f64))).max(100.0 * error.scale().recip()).ln();
    let lo = (1e-8f64).ln();
    let (_, v) = maximize_log(&theta_sq, lo, hi, "theta")?;
    Ok(v)
}

/// [`maximize`] for a function of `t = ln ω`, on an evenly spaced grid in `t`.
fn maximize_log(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, what: &'static str) -> Result<(f64, f64), MultiplierError> {
    const N: usize = 4000;
    let grid: Vec<f64> = (0..=N).map(|i| lo + (hi - lo) * i as f64 / N as f64).collect();
    let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
    for (i, &t) in grid.iter().enumerate() {
        let v = f(t);
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    if best == N {
        return Err(MultiplierError::MaximizerAtBoundary { what, omega: grid[N].exp() });
    }
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(N)];
    let (t, v) = golden_max(f, a, b, 1e-14);
    Ok(if v >= best_v { (t, v) } else { (grid[best], best_v) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn gauss1() -> ErrorModel {
        ErrorModel::gaussian(1.0).unwrap()
    }

    #[test]
    fn phi_tilde_examples() {
        let mult = Multiplier::new(1.0, 2, gauss1()).unwrap();
        assert_eq!(mult.value(0.0), 1.0);
        let expect = (-0.5f64).exp() / ((-1.0f64).exp() + 1.0);
        assert_relative_eq!(mult.value(1.0), expect, max_relative = 1e-15);
        assert_abs_diff_eq!(expect, 0.443410, epsilon = 1e-6);
        let u = Multiplier::new(0.3, 2, ErrorModel::uniform(1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(u.value(std::f64::consts::PI), 0.0, epsilon = 1e-15);
        assert!(Multiplier::new(0.0, 2, gauss1()).is_err());
        assert!(Multiplier::new(1.0, 0, gauss1()).is_err());
    }

    #[test]
    fn phi_tilde_is_even() {
        let mult = Multiplier::new(1e-3, 2, ErrorModel::laplace(0.7).unwrap()).unwrap();
        for i in 0..500 {
            let w = 0.037 * i as f64;
            assert_eq!(mult.value(w), mult.value(-w));
        }
    }

    #[test]
    fn sup_phi_tends_to_one_for_large_alpha() {
        // Near ω = 0, φ̃ ≈ 1/g̃ > 1, so the sup only approaches 1 as α grows.
        let mut prev = f64::INFINITY;
        for alpha in [1.0, 10.0, 1e4] {
            let s = Multiplier::new(alpha, 2, gauss1()).unwrap().sup().unwrap();
            assert!(s >= 1.0 && s < prev);
            prev = s;
        }
        assert_abs_diff_eq!(prev, 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(Multiplier::new(1.0, 2, gauss1()).unwrap().sup().unwrap(), 1.0537182, epsilon = 1e-6);
    }

    #[test]
    fn sup_phi_respects_constructive_constant() {
        // max{√M/c, ε^{-m}/2} with M = 1, ε = 1, c = g̃(ε) = e^{-1/2}.
        let bound = 0.5f64.exp();
        for m in 1..=3 {
            for e in 0..=24 {
                let alpha = 10f64.powf(-0.25 * e as f64);
                let s = Multiplier::new(alpha, m, gauss1()).unwrap().sup().unwrap();
                assert!(alpha.sqrt() * s <= bound, "m={m} alpha={alpha} sup={s}");
            }
        }
    }

    #[test]
    fn sup_phi_finite_for_uniform_error() {
        let mult = Multiplier::new(1e-2, 2, ErrorModel::uniform(1.0).unwrap()).unwrap();
        let s = mult.sup().unwrap();
        let brute = (0..200_000).map(|i| mult.value(i as f64 * 1e-4).abs()).fold(0.0, f64::max);
        assert!(s.is_finite());
        assert!(s >= brute * (1.0 - 1e-9));
        assert_relative_eq!(s, brute, max_relative = 1e-6);
    }

    #[test]
    fn sup_phi_matches_brute_force() {
        for (alpha, g) in [(1e-4, gauss1()), (1e-6, ErrorModel::laplace(1.0).unwrap()), (1e-3, ErrorModel::cauchy(1.0).unwrap())] {
            let mult = Multiplier::new(alpha, 2, g).unwrap();
            let lim = mult.sup_search_limit();
            let brute = (0..400_000).map(|i| mult.value(i as f64 * lim / 400_000.0)).fold(0.0, f64::max);
            assert_relative_eq!(mult.sup().unwrap(), brute, max_relative = 1e-6);
        }
    }

    /// Bisection on `w e^w = x`.
    fn lambert_bisect(x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, x.max(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_w_examples() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert_relative_eq!(lambert_w(std::f64::consts::E).unwrap(), 1.0, max_relative = 1e-15);
        assert_abs_diff_eq!(lambert_w(1.0).unwrap(), lambert_bisect(1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(lambert_w(1.0).unwrap(), 0.567143290, epsilon = 1e-9);
        assert_eq!(lambert_w(-1.0), Err(MultiplierError::NegativeArgument(-1.0)));
    }

    #[test]
    fn lambert_w_inverts_and_is_monotone() {
        let mut prev = -1.0;
        for i in 0..=1000 {
            let x = 10.0 * i as f64 / 1000.0;
            assert_abs_diff_eq!(lambert_w(x * x.exp()).unwrap(), x, epsilon = 1e-12 * x.max(1.0));
            let w = lambert_w(x).unwrap();
            assert!(w > prev);
            prev = w;
        }
    }

    #[test]
    fn systematic_bound_examples() {
        let b = systematic_bound(RateFamily::Normal, 1, 2, 0.01, 1.0);
        assert!(b.in_regime);
        assert_relative_eq!(b.value, 1.0 / (2.0 * lambert_bisect(5.0)), max_relative = 1e-12);
        assert_abs_diff_eq!(b.value, 0.376868, epsilon = 1e-6);
        assert_relative_eq!(systematic_bound(RateFamily::Laplace, 4, 2, 0.25, 1.0).value, 1.0);
        let c = systematic_bound(RateFamily::Cauchy, 1, 1, (-4f64).exp(), 1.0);
        let w = lambert_bisect(std::f64::consts::E.powi(2));
        assert_relative_eq!(c.value, 1.0 / (w * w), max_relative = 1e-12);
        assert_abs_diff_eq!(c.value, 0.412422, epsilon = 1e-6);
    }

    #[test]
    fn systematic_bound_sentinel_out_of_regime() {
        let b = systematic_bound(RateFamily::Normal, 1, 2, 1.0, 1.0);
        assert!(!b.in_regime && b.value.is_infinite());
        assert!(!systematic_bound(RateFamily::Laplace, 1, 2, 0.3, 1.0).in_regime);
    }

    #[test]
    fn theta_sup_below_bound() {
        for family in [RateFamily::Normal, RateFamily::Cauchy, RateFamily::Laplace] {
            for m in 1..=2 {
                for k in 1..=2 {
                    for alpha in [1e-2, 1e-4, 1e-6] {
                        let b = systematic_bound(family, k, m, alpha, 1.0);
                        if !b.in_regime {
                            continue;
                        }
                        let t = theta_sup_numeric(&family.unit_error(), k, m, alpha).unwrap();
                        assert!(t <= b.value, "{family:?} m={m} k={k} α={alpha}: {t} > {}", b.value);
                    }
                }
            }
        }
    }

    #[test]
    fn theta_sup_laplace_figure_setup() {
        // m = 2, k = 2, α = 1/10: the crossing point ω₀ = (1/(4α))^{1/(2m+4)}
        // gives ω₀^{-2k} as an upper bound.
        let t = theta_sup_numeric(&RateFamily::Laplace.unit_error(), 2, 2, 0.1).unwrap();
        let w0 = (1.0f64 / 0.4).powf(1.0 / 8.0);
        assert!(t <= w0.powi(-4));
        assert!(t > 0.0);
    }

    #[test]
    fn theta_sup_finite_for_large_alpha() {
        for alpha in [1.0, 1e2, 1e4] {
            let t = theta_sup_numeric(&gauss1(), 1, 2, alpha).unwrap();
            assert!(t.is_finite() && t > 0.0);
        }
    }

    #[test]
    fn rate_alpha_examples() {
        let n = RateSpec::new(RateFamily::Normal, 1, 2, 0.01).unwrap();
        assert_relative_eq!(n.rate_alpha(), 0.01 * lambert_bisect(100.0), max_relative = 1e-12);
        assert_abs_diff_eq!(n.rate_alpha(), 0.0338563, epsilon = 1e-7);
        let l = RateSpec::new(RateFamily::Laplace, 2, 2, 0.01).unwrap();
        assert_relative_eq!(l.rate_alpha(), 0.01, max_relative = 1e-14);
        let c = RateSpec::new(RateFamily::Cauchy, 1, 2, 1e-4).unwrap();
        assert_relative_eq!(c.rate_alpha(), 1e-4 * lambert_bisect(100.0).powi(2), max_relative = 1e-12);
        assert_abs_diff_eq!(c.rate_alpha(), 1.14625e-3, epsilon = 1e-8);
        assert!(RateSpec::new(RateFamily::Normal, 5, 2, 0.01).is_err());
        assert!(!RateSpec::new(RateFamily::Normal, 1, 2, 2.0).unwrap().warnings().is_empty());
    }

    #[test]
    fn laplace_two_term_tradeoff_near_optimal() {
        for (k, m) in [(1, 2), (2, 2), (1, 1), (3, 2)] {
            for d2 in [1e-2, 1e-4, 1e-6] {
                let mf = m as f64;
                let h = |a: f64| d2 * a.powf(-2.0 / (mf + 2.0)) + a.powf(k as f64 / (mf + 2.0));
                let at_rule = h(RateSpec::new(RateFamily::Laplace, k, m, d2).unwrap().rate_alpha());
                let best = (0..=4000).map(|i| h(10f64.powf(-16.0 + 16.0 * i as f64 / 4000.0))).fold(f64::INFINITY, f64::min);
                assert!(at_rule <= 2.0 * best, "k={k} m={m} δ²={d2}");
            }
        }
    }
}
