//! Cubic B-spline computation of the estimate: unit-integral basis on evenly
//! spaced knots, Gram assembly, ridge solve, and projection onto densities.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{CurveMeta, DensityCurve};
use crate::fourier::{
    gauss_legendre, sinc, ErrorModel, FourierError, FrequencyQuadrature, PilotEstimate, Spectrum, UniformGrid,
};
use crate::multiplier::error_cf;
use crate::qp::{qp_solve, QpError, QpProblem, QpSolution};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SplineError {
    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    #[error("basis index {index} out of range for q = {q}")]
    IndexOutOfRange { index: usize, q: usize },

    #[error("M + αP is not positive definite (α = {0})")]
    SingularSystem(f64),

    #[error(transparent)]
    Fourier(#[from] FourierError),

    #[error(transparent)]
    Qp(#[from] QpError),
}

impl SplineError {
    pub fn name(&self) -> &'static str {
        match self {
            SplineError::BadDimensions(_) => "BadDimensions",
            SplineError::IndexOutOfRange { .. } => "IndexOutOfRange",
            SplineError::SingularSystem(_) => "SingularSystem",
            SplineError::Fourier(e) => e.name(),
            SplineError::Qp(e) => e.name(),
        }
    }
}

/// Cardinal cubic B-spline on `[0, 4]`.
pub fn cardinal_cubic(t: f64) -> f64 {
    if !(0.0..4.0).contains(&t) {
        return 0.0;
    }
    if t < 1.0 {
        t * t * t / 6.0
    } else if t < 2.0 {
        (-3.0 * t * t * t + 12.0 * t * t - 12.0 * t + 4.0) / 6.0
    } else if t < 3.0 {
        (3.0 * t * t * t - 24.0 * t * t + 60.0 * t - 44.0) / 6.0
    } else {
        let u = 4.0 - t;
        u * u * u / 6.0
    }
}

/// Second derivative of [`cardinal_cubic`], piecewise linear.
pub fn cardinal_cubic_dd(t: f64) -> f64 {
    if !(0.0..4.0).contains(&t) {
        return 0.0;
    }
    if t < 1.0 {
        t
    } else if t < 2.0 {
        -3.0 * t + 4.0
    } else if t < 3.0 {
        3.0 * t - 8.0
    } else {
        4.0 - t
    }
}

/// `∫ u(t) v(t − k) dt` for functions supported on `[0, 4]` and polynomial of
/// degree ≤ 3 on each unit interval; exact with 8-point Gauss–Legendre.
fn autocorrelation(f: impl Fn(f64) -> f64, k: usize) -> f64 {
    let (x, w) = gauss_legendre(8);
    let mut total = 0.0;
    for cell in k..4 {
        let mid = cell as f64 + 0.5;
        for (xi, wi) in x.iter().zip(&w) {
            let t = mid + 0.5 * xi;
            total += 0.5 * wi * f(t) * f(t - k as f64);
        }
    }
    total
}

/// Cubic splines on `[a, b]` spanned by `q` unit-integral B-splines on the
/// knots `ξ_j = a + jΔ`, `j = 0..q+3`, `Δ = (b−a)/(q+3)`. Every member and its
/// first two derivatives vanish at both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineSpace {
    pub a: f64,
    pub b: f64,
    pub q: usize,
}

impl SplineSpace {
    pub fn new(a: f64, b: f64, q: usize) -> Result<Self, SplineError> {
        if q < 4 {
            return Err(SplineError::BadDimensions(format!("need q ≥ 4 basis functions, got {q}")));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(SplineError::BadDimensions(format!("need a < b, got [{a}, {b}]")));
        }
        Ok(SplineSpace { a, b, q })
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.q + 3) as f64
    }

    pub fn knots(&self) -> Vec<f64> {
        let d = self.spacing();
        (0..self.q + 4).map(|j| self.a + j as f64 * d).collect()
    }

    fn check_index(&self, i: usize) -> Result<(), SplineError> {
        if i >= self.q {
            return Err(SplineError::IndexOutOfRange { index: i, q: self.q });
        }
        Ok(())
    }

    /// Centre of the support of `b_i` (0-based).
    pub fn center(&self, i: usize) -> f64 {
        self.a + (i as f64 + 2.0) * self.spacing()
    }

    /// `b_i(x)`, 0-based.
    pub fn basis(&self, i: usize, x: f64) -> Result<f64, SplineError> {
        self.check_index(i)?;
        let d = self.spacing();
        Ok(cardinal_cubic((x - self.a) / d - i as f64) / d)
    }

    /// `b̃_i(ω) = e^{−iω c_i} sinc(ωΔ/2)⁴` with `c_i` the support centre.
    pub fn basis_ft(&self, i: usize, omega: f64) -> Result<Complex64, SplineError> {
        self.check_index(i)?;
        let s = sinc(0.5 * omega * self.spacing());
        Ok(Complex64::from_polar(s.powi(4), -omega * self.center(i)))
    }

    /// `Σ θ_i b_i` on `grid`.
    pub fn evaluate(&self, theta: &[f64], grid: &UniformGrid) -> Result<DensityCurve, SplineError> {
        if theta.len() != self.q {
            return Err(SplineError::BadDimensions(format!("theta has {} entries, q = {}", theta.len(), self.q)));
        }
        let values = (0..grid.len).map(|k| self.value(theta, grid.point(k))).collect();
        let meta = CurveMeta { estimator: format!("spline(q={})", self.q), normalized: true, ..Default::default() };
        Ok(DensityCurve { grid: *grid, values, meta })
    }

    /// `Σ θ_i b_i(x)` using only the four basis functions alive at `x`.
    pub fn value(&self, theta: &[f64], x: f64) -> f64 {
        let d = self.spacing();
        let u = (x - self.a) / d;
        if !(0.0..(self.q + 3) as f64).contains(&u) {
            return 0.0;
        }
        let span = u.floor() as isize;
        let mut s = 0.0;
        for i in (span - 3).max(0)..=span.min(self.q as isize - 1) {
            s += theta[i as usize] * cardinal_cubic(u - i as f64);
        }
        s / d
    }

    /// Evaluation matrix `B_x` on `n_x` evenly spaced points spanning the knots.
    pub fn evaluation_matrix(&self, n_x: usize) -> (Vec<f64>, DMatrix<f64>) {
        let knots = self.knots();
        let (lo, hi) = (knots[0], knots[knots.len() - 1]);
        let xs: Vec<f64> = (0..n_x).map(|k| lo + (hi - lo) * k as f64 / (n_x - 1) as f64).collect();
        let d = self.spacing();
        let mut bx = DMatrix::zeros(n_x, self.q);
        for (r, &x) in xs.iter().enumerate() {
            let u = (x - self.a) / d;
            for i in 0..self.q {
                bx[(r, i)] = cardinal_cubic(u - i as f64) / d;
            }
        }
        (xs, bx)
    }

    /// `G_ij = ∫ b_i b_j`, banded Toeplitz.
    pub fn gram(&self) -> DMatrix<f64> {
        let d = self.spacing();
        let a0: Vec<f64> = (0..4).map(|k| autocorrelation(cardinal_cubic, k) / d).collect();
        toeplitz(self.q, &a0)
    }

    /// `P_ij = ∫ b_i'' b_j''`, banded Toeplitz.
    pub fn penalty(&self) -> DMatrix<f64> {
        let d = self.spacing();
        let a2: Vec<f64> = (0..4).map(|k| autocorrelation(cardinal_cubic_dd, k) / d.powi(5)).collect();
        toeplitz(self.q, &a2)
    }
}

fn toeplitz(q: usize, band: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(q, q, |i, j| band.get(i.abs_diff(j)).copied().unwrap_or(0.0))
}

/// The linear-algebra objects of the spline problem.
#[derive(Clone, Debug)]
pub struct GramSet {
    pub space: SplineSpace,
    /// `∫ (g*b_i)(g*b_j)`.
    pub m: DMatrix<f64>,
    /// `∫ b_i'' b_j''`.
    pub p: DMatrix<f64>,
    /// `∫ b_i b_j`.
    pub g: DMatrix<f64>,
    /// `∫ (g*b_i) h_n`.
    pub d: DVector<f64>,
    pub xs: Vec<f64>,
    pub bx: DMatrix<f64>,
}

/// Default number of nonnegativity points for a `q`-dimensional space.
pub fn default_n_x(q: usize) -> usize {
    (4 * q).max(200)
}

/// Assembles `M` and `d` by frequency quadrature, `G` and `P` exactly, and
/// `B_x` on `n_x` points.
pub fn assemble(
    space: &SplineSpace,
    error: Option<&ErrorModel>,
    pilot: &PilotEstimate,
    n_x: usize,
) -> Result<GramSet, SplineError> {
    assemble_spectrum(space, error, pilot, |w| pilot.ft_envelope(w), pilot.data_range(), n_x)
}

/// [`assemble`] for an arbitrary pilot transform `h`, given a bound on `|h̃|`
/// and an interval holding most of the pilot's mass.
pub fn assemble_spectrum<S: Spectrum + ?Sized>(
    space: &SplineSpace,
    error: Option<&ErrorModel>,
    h: &S,
    h_envelope: impl Fn(f64) -> f64,
    h_range: (f64, f64),
    n_x: usize,
) -> Result<GramSet, SplineError> {
    if n_x < 4 * space.q {
        return Err(SplineError::BadDimensions(format!("n_x = {n_x} below 4q = {}", 4 * space.q)));
    }
    let delta = space.spacing();
    let q = space.q;
    let width = space.b - space.a;
    let sinc4 = |w: f64| sinc(0.5 * w * delta).powi(4);

    // M is Toeplitz: M_ij = (2π)⁻¹ ∫ cos(ω(i−j)Δ) sinc(ωΔ/2)⁸ g̃² dω.
    let m_quad = FrequencyQuadrature::for_envelope(|w| sinc4(w).powi(2) * error_cf(error, w).powi(2), width)?;
    let m_band: Vec<f64> = (0..q)
        .into_par_iter()
        .map(|k| {
            m_quad.integrate_even(|w| (w * k as f64 * delta).cos() * (sinc4(w) * error_cf(error, w)).powi(2))
                / (2.0 * PI)
        })
        .collect();
    let m = DMatrix::from_fn(q, q, |i, j| m_band[i.abs_diff(j)]);

    // d_i = (2π)⁻¹ ∫ Re(g̃ b̃_i conj h̃) dω.
    let (lo, hi) = h_range;
    let extent = (hi - space.a).abs().max((space.b - lo).abs()).max(1.0);
    let d_quad =
        FrequencyQuadrature::for_envelope(|w| sinc4(w) * error_cf(error, w).abs() * h_envelope(w), extent)?;
    let nodes: Vec<(f64, f64)> = d_quad.even_half().collect();
    let c0 = space.center(0);
    let d = nodes
        .par_chunks(256)
        .map(|chunk| {
            let mut acc = DVector::zeros(q);
            for &(w, wt) in chunk {
                let amp = wt * error_cf(error, w) * sinc4(w);
                if amp == 0.0 {
                    continue;
                }
                // b̃_i = sinc⁴ e^{−iωc_i} with c_i = c_0 + iΔ.
                let hc = h.ft(w).conj() * amp;
                let mut phase = Complex64::from_polar(1.0, -w * c0);
                let rot = Complex64::from_polar(1.0, -w * delta);
                for i in 0..q {
                    acc[i] += (phase * hc).re;
                    phase *= rot;
                }
            }
            acc
        })
        .reduce(|| DVector::zeros(q), |a, b| a + b)
        / (2.0 * PI);

    let (xs, bx) = space.evaluation_matrix(n_x);
    Ok(GramSet { space: *space, m, p: space.penalty(), g: space.gram(), d, xs, bx })
}

/// `θ = (M + αP)⁻¹ d` by Cholesky.
pub fn solve_theta(gram: &GramSet, alpha: f64) -> Result<DVector<f64>, SplineError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SplineError::SingularSystem(alpha));
    }
    let a = &gram.m + &gram.p * alpha;
    let chol = a.cholesky().ok_or(SplineError::SingularSystem(alpha))?;
    Ok(chol.solve(&gram.d))
}

/// The spline Tikhonov objective up to the constant `‖h_n‖²`:
/// `θᵀMθ − 2θᵀd + α θᵀPθ`.
pub fn spline_objective(gram: &GramSet, theta: &DVector<f64>, alpha: f64) -> f64 {
    (theta.transpose() * (&gram.m + &gram.p * alpha) * theta)[(0, 0)] - 2.0 * theta.dot(&gram.d)
}

/// Projection QP: `min (θ−t)ᵀG(θ−t)` subject to `1ᵀθ = 1` and `B_x θ ≥ 0`.
pub fn projection_problem(theta: &DVector<f64>, gram: &GramSet) -> QpProblem {
    let q = gram.space.q;
    QpProblem {
        q: gram.g.clone(),
        c: -(&gram.g * theta),
        eq: vec![(DVector::from_element(q, 1.0), 1.0)],
        ineq: (0..gram.bx.nrows()).map(|r| (gram.bx.row(r).transpose(), 0.0)).collect(),
    }
}

pub const PROJECTION_TOL: f64 = 1e-10;

/// Projects `theta` in the `G`-norm onto coefficient vectors of densities
/// (unit mass, nonnegative on the `B_x` grid).
pub fn project_to_pdf(theta: &DVector<f64>, gram: &GramSet) -> Result<QpSolution, SplineError> {
    if theta.len() != gram.space.q {
        return Err(SplineError::BadDimensions("theta length differs from q".into()));
    }
    let mut sol = qp_solve(&projection_problem(theta, gram), PROJECTION_TOL)?;
    // Restore exact unit mass lost to rounding.
    let total: f64 = sol.x.sum();
    sol.x /= total;
    Ok(sol)
}

/// Default interval: the data range widened by four error spreads per side.
pub fn default_interval(pilot: &PilotEstimate, error: Option<&ErrorModel>) -> (f64, f64) {
    let (lo, hi) = pilot.data_range();
    let pad = 4.0 * error.map(|e| e.spread()).unwrap_or(0.0);
    let (lo, hi) = (lo - pad, hi + pad);
    if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) }
}

/// Result of the spline computation path.
#[derive(Clone, Debug)]
pub struct SplineFit {
    pub space: SplineSpace,
    /// Unconstrained ridge coefficients.
    pub theta: DVector<f64>,
    /// Coefficients after projection onto densities, when requested.
    pub projected: Option<DVector<f64>>,
    pub curve: DensityCurve,
}

/// Assembles, solves and (optionally) projects, then evaluates on `grid`.
pub fn spline_estimate(
    pilot: &PilotEstimate,
    error: Option<&ErrorModel>,
    alpha: f64,
    space: &SplineSpace,
    grid: &UniformGrid,
    project: bool,
) -> Result<SplineFit, SplineError> {
    let gram = assemble(space, error, pilot, default_n_x(space.q))?;
    let theta = solve_theta(&gram, alpha)?;
    let projected = if project { Some(project_to_pdf(&theta, &gram)?.x) } else { None };
    let coef = projected.as_ref().unwrap_or(&theta);
    let mut curve = space.evaluate(coef.as_slice(), grid)?;
    curve.meta.estimator = "sped-spline".into();
    curve.meta.tuning = Some(alpha);
    curve.meta.pilot = Some(crate::estimator::pilot_label(pilot));
    curve.meta.normalized = project;
    let (lo, hi) = pilot.data_range();
    if hi < space.a || lo > space.b {
        curve.meta.warnings.push(format!("pilot mass lies outside [{}, {}]", space.a, space.b));
    }
    Ok(SplineFit { space: *space, theta, projected, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn knots_example() {
        let s = SplineSpace::new(0.0, 7.0, 4).unwrap();
        assert_eq!(s.knots(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert!(matches!(SplineSpace::new(0.0, 7.0, 3), Err(SplineError::BadDimensions(_))));
        assert!(SplineSpace::new(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn autocorrelations_match_eighth_order_bspline() {
        let a0: Vec<f64> = (0..4).map(|k| autocorrelation(cardinal_cubic, k)).collect();
        let expect = [151.0 / 315.0, 397.0 / 1680.0, 1.0 / 42.0, 1.0 / 5040.0];
        for (a, e) in a0.iter().zip(expect) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
        let a2: Vec<f64> = (0..4).map(|k| autocorrelation(cardinal_cubic_dd, k)).collect();
        let expect = [8.0 / 3.0, -1.5, 0.0, 1.0 / 6.0];
        for (a, e) in a2.iter().zip(expect) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-14);
        }
    }

    #[test]
    fn basis_has_unit_integral_and_partition_of_unity() {
        let s = SplineSpace::new(-2.0, 5.0, 9).unwrap();
        let d = s.spacing();
        let (x, w) = gauss_legendre(8);
        for i in 0..s.q {
            let mut total = 0.0;
            for cell in 0..4 {
                let mid = s.a + (i + cell) as f64 * d + 0.5 * d;
                total += x.iter().zip(&w).map(|(xi, wi)| 0.5 * d * wi * s.basis(i, mid + 0.5 * d * xi).unwrap()).sum::<f64>();
            }
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        }
        let knots = s.knots();
        for k in 0..=100 {
            let x = knots[3] + (knots[s.q] - knots[3]) * k as f64 / 100.0;
            let sum: f64 = (0..s.q).map(|i| d * s.basis(i, x).unwrap()).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn basis_ft_examples() {
        let s = SplineSpace::new(0.0, 7.0, 4).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(s.basis_ft(i, 0.0).unwrap().re, 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.basis_ft(1, 2.0 * PI).unwrap().norm(), 0.0, epsilon = 1e-15);
        assert!(matches!(s.basis_ft(4, 1.0), Err(SplineError::IndexOutOfRange { .. })));
    }

    #[test]
    fn basis_ft_matches_direct_quadrature() {
        let s = SplineSpace::new(0.0, 7.0, 4).unwrap();
        let w = 0.73;
        let (x, wt) = gauss_legendre(8);
        let mut direct = Complex64::new(0.0, 0.0);
        for cell in 1..5 {
            let mid = cell as f64 + 0.5;
            for (xi, wi) in x.iter().zip(&wt) {
                let t = mid + 0.5 * xi;
                direct += Complex64::from_polar(0.5 * wi * s.basis(1, t).unwrap(), -w * t);
            }
        }
        let closed = s.basis_ft(1, w).unwrap();
        // Integrand is a cubic times e^{-iωt}; 8 points per unit cell is exact to ~1e-16.
        assert_abs_diff_eq!((direct - closed).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gram_row_sums_and_penalty_kills_linears() {
        let s = SplineSpace::new(0.0, 10.0, 12).unwrap();
        let g = s.gram();
        let d = s.spacing();
        // Interior rows: Σ_j G_ij = ∫ b_i Σ_j b_j = ∫ b_i / Δ = 1/Δ.
        for i in 3..s.q - 3 {
            assert_abs_diff_eq!(g.row(i).sum(), 1.0 / d, epsilon = 1e-12);
        }
        let p = s.penalty();
        // A linear function restricted to the interior has zero curvature there.
        let theta = DVector::from_fn(s.q, |i, _| if (3..s.q - 3).contains(&i) { 0.5 + 0.1 * i as f64 } else { 0.0 });
        let inner = p.view((3, 3), (s.q - 6, s.q - 6));
        let sub = theta.rows(3, s.q - 6);
        // Second differences of a linear sequence vanish away from the ends of the block.
        let pv = inner * sub;
        for i in 3..pv.len() - 3 {
            assert_abs_diff_eq!(pv[i], 0.0, epsilon = 1e-8);
        }
        assert!(p.clone().symmetric_eigenvalues().min() > -1e-10);
        assert!(g.clone().cholesky().is_some());
    }

    #[test]
    fn evaluate_examples() {
        let s = SplineSpace::new(0.0, 7.0, 4).unwrap();
        let grid = UniformGrid::new(0.0, 7.0, 71).unwrap();
        assert!(s.evaluate(&[0.0; 4], &grid).unwrap().values.iter().all(|&v| v == 0.0));
        let c = s.evaluate(&[0.0, 1.0, 0.0, 0.0], &grid).unwrap();
        for (x, v) in grid.points().iter().zip(&c.values) {
            assert_abs_diff_eq!(*v, s.basis(1, *x).unwrap(), epsilon = 1e-15);
        }
    }
}
