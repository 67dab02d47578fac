//! Dense convex quadratic programming by the dual active-set method of
//! Goldfarb and Idnani.
//!
//! Solves `min ½ xᵀQx + cᵀx` subject to `a_iᵀx = b_i` and `a_jᵀx ≥ b_j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum QpError {
    #[error("feasible region is empty (residual {0:e})")]
    Infeasible(f64),

    #[error("active-set iteration limit {0} reached")]
    MaxIterations(usize),

    #[error("inconsistent dimensions: {0}")]
    BadDimensions(String),

    #[error("Q is not positive semidefinite")]
    NotConvex,
}

impl QpError {
    pub fn name(&self) -> &'static str {
        match self {
            QpError::Infeasible(_) => "Infeasible",
            QpError::MaxIterations(_) => "MaxIterations",
            QpError::BadDimensions(_) => "BadDimensions",
            QpError::NotConvex => "NotConvex",
        }
    }
}

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    /// `row · x = rhs`.
    pub eq: Vec<(DVector<f64>, f64)>,
    /// `row · x ≥ rhs`.
    pub ineq: Vec<(DVector<f64>, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub eq_violation: f64,
    pub ineq_violation: f64,
    pub complementarity: f64,
    pub dual_infeasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [self.stationarity, self.eq_violation, self.ineq_violation, self.complementarity, self.dual_infeasibility]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub iterations: usize,
    pub kkt: KktResiduals,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(QpError::BadDimensions(format!("Q is {}x{}, c has {n}", self.q.nrows(), self.q.ncols())));
        }
        if self.eq.iter().chain(&self.ineq).any(|(row, _)| row.len() != n) {
            return Err(QpError::BadDimensions("constraint row length differs from dimension".into()));
        }
        if self.eq.iter().chain(&self.ineq).any(|(row, b)| !b.is_finite() || row.iter().any(|v| !v.is_finite())) {
            return Err(QpError::BadDimensions("constraints contain non-finite values".into()));
        }
        let asym = (&self.q - self.q.transpose()).abs().max();
        if asym > 1e-10 * self.q.abs().max().max(1.0) {
            return Err(QpError::NotConvex);
        }
        Ok(())
    }

    /// KKT residuals of `x` with the given multipliers.
    pub fn kkt(&self, x: &DVector<f64>, eq_mult: &DVector<f64>, ineq_mult: &DVector<f64>) -> KktResiduals {
        let mut grad = &self.q * x + &self.c;
        for ((row, _), l) in self.eq.iter().zip(eq_mult.iter()) {
            grad -= row * *l;
        }
        for ((row, _), l) in self.ineq.iter().zip(ineq_mult.iter()) {
            grad -= row * *l;
        }
        let mut r = KktResiduals { stationarity: grad.amax(), ..Default::default() };
        for (row, b) in &self.eq {
            r.eq_violation = r.eq_violation.max((row.dot(x) - b).abs());
        }
        for ((row, b), l) in self.ineq.iter().zip(ineq_mult.iter()) {
            let slack = row.dot(x) - b;
            r.ineq_violation = r.ineq_violation.max(-slack);
            r.complementarity = r.complementarity.max((slack * l).abs());
            r.dual_infeasibility = r.dual_infeasibility.max(-l);
        }
        r
    }
}

const MAX_ITER_FACTOR: usize = 10;

/// Solves `problem` to constraint violation at most `tol`.
///
/// Starts from the unconstrained minimizer and adds violated constraints one
/// at a time while keeping dual feasibility, so a feasible unconstrained
/// minimizer is returned untouched.
pub fn qp_solve(problem: &QpProblem, tol: f64) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.dim();
    let chol = regularized(&problem.q)?;
    // J = L⁻ᵀ, so that Q⁻¹ = J Jᵀ.
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(QpError::NotConvex)?;
    let j = l_inv.transpose();
    let mut state = DualState {
        x: -chol.solve(&problem.c),
        j,
        active: Vec::new(),
        u: Vec::new(),
        iterations: 0,
        max_iter: MAX_ITER_FACTOR * (n + problem.eq.len() + problem.ineq.len()) + 100,
    };

    for (i, (row, b)) in problem.eq.iter().enumerate() {
        let s = row.dot(&state.x) - b;
        // Treat the equality as `σ·row·x ≥ σ·b` with σ chosen so it is violated.
        let sign = if s > 0.0 { -1.0 } else { 1.0 };
        state.add(problem, Constraint::Eq(i, sign), tol)?;
    }

    // Constraints found dependent on the active set at the current x.
    let mut redundant = vec![false; problem.ineq.len()];
    loop {
        let mut worst: Option<(usize, f64)> = None;
        for (k, (row, b)) in problem.ineq.iter().enumerate() {
            let viol = (b - row.dot(&state.x)) / row.norm().max(1e-300);
            if !redundant[k] && viol > tol && worst.is_none_or(|(_, w)| viol > w) {
                worst = Some((k, viol));
            }
        }
        let Some((k, _)) = worst else { break };
        if state.add(problem, Constraint::Ineq(k), tol)? {
            redundant.fill(false);
        } else {
            redundant[k] = true;
        }
    }

    state.polish(problem, tol);

    let mut eq_mult = DVector::zeros(problem.eq.len());
    let mut ineq_mult = DVector::zeros(problem.ineq.len());
    for (c, &u) in state.active.iter().zip(&state.u) {
        match *c {
            Constraint::Eq(i, sign) => eq_mult[i] = sign * u,
            Constraint::Ineq(k) => ineq_mult[k] = u,
        }
    }
    let kkt = problem.kkt(&state.x, &eq_mult, &ineq_mult);
    Ok(QpSolution { x: state.x, eq_multipliers: eq_mult, ineq_multipliers: ineq_mult, iterations: state.iterations, kkt })
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Constraint {
    /// Equality index and the orientation used while adding it.
    Eq(usize, f64),
    Ineq(usize),
}

impl Constraint {
    fn normal(&self, problem: &QpProblem) -> DVector<f64> {
        match *self {
            Constraint::Eq(i, sign) => &problem.eq[i].0 * sign,
            Constraint::Ineq(k) => problem.ineq[k].0.clone(),
        }
    }

    fn rhs(&self, problem: &QpProblem) -> f64 {
        match *self {
            Constraint::Eq(i, sign) => problem.eq[i].1 * sign,
            Constraint::Ineq(k) => problem.ineq[k].1,
        }
    }
}

struct DualState {
    x: DVector<f64>,
    j: DMatrix<f64>,
    active: Vec<Constraint>,
    u: Vec<f64>,
    iterations: usize,
    max_iter: usize,
}

impl DualState {
    /// Primal direction `z` and dual direction `r` for adding normal `np`.
    fn directions(&self, problem: &QpProblem, np: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let d = self.j.transpose() * np;
        if self.active.is_empty() {
            return (&self.j * &d, DVector::zeros(0));
        }
        let n = self.x.len();
        let mut b = DMatrix::zeros(n, self.active.len());
        for (col, c) in self.active.iter().enumerate() {
            b.set_column(col, &(self.j.transpose() * c.normal(problem)));
        }
        let qr = b.qr();
        let q1 = qr.q();
        let r = qr.r();
        let d1 = q1.transpose() * &d;
        let d2 = &d - &q1 * &d1;
        let dual = r.solve_upper_triangular(&d1).unwrap_or_else(|| DVector::zeros(self.active.len()));
        (&self.j * d2, dual)
    }

    /// Adds constraint `p`, dropping active inequalities as needed. Returns
    /// false when `p` was already implied by the untouched active set.
    fn add(&mut self, problem: &QpProblem, p: Constraint, tol: f64) -> Result<bool, QpError> {
        let np = p.normal(problem);
        let bp = p.rhs(problem);
        let mut u_new = 0.0;
        let mut dropped = false;
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iter {
                return Err(QpError::MaxIterations(self.max_iter));
            }
            let s = np.dot(&self.x) - bp;
            let (z, r) = self.directions(problem, &np);
            let zn = z.dot(&np);
            // A direction this short means np lies in the span of the active normals.
            let full = if zn > 1e-14 * np.norm_squared() * self.j.amax().powi(2) { -s / zn } else { f64::INFINITY };
            let mut partial = f64::INFINITY;
            let mut drop = None;
            for (k, c) in self.active.iter().enumerate() {
                if matches!(c, Constraint::Ineq(_)) && r[k] > 0.0 {
                    let t = self.u[k] / r[k];
                    if t < partial {
                        partial = t;
                        drop = Some(k);
                    }
                }
            }
            if full.is_infinite() && -s <= tol * np.norm().max(1.0 + bp.abs()) {
                return Ok(dropped);
            }
            let t = full.min(partial);
            if t.is_infinite() {
                return Err(QpError::Infeasible(-s));
            }
            if full.is_finite() {
                self.x += &z * t;
            }
            for (uk, rk) in self.u.iter_mut().zip(r.iter()) {
                *uk -= t * rk;
            }
            u_new += t;
            if t == full {
                self.push(p, u_new);
                return Ok(true);
            }
            let k = drop.expect("partial step has a blocking constraint");
            self.active.remove(k);
            self.u.remove(k);
            dropped = true;
        }
    }

    /// Re-solves the KKT system of the final active set directly. The
    /// incremental updates drift when many near-dependent constraints have
    /// come and gone; the direct solve is kept only if it stays feasible and
    /// dual feasible.
    fn polish(&mut self, problem: &QpProblem, tol: f64) {
        let n = self.x.len();
        let k = self.active.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.q);
        rhs.rows_mut(0, n).copy_from(&(-&problem.c));
        for (col, c) in self.active.iter().enumerate() {
            let normal = c.normal(problem);
            kkt.view_mut((0, n + col), (n, 1)).copy_from(&(-&normal));
            kkt.view_mut((n + col, 0), (1, n)).copy_from(&normal.transpose());
            rhs[n + col] = c.rhs(problem);
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { return };
        if sol.iter().any(|v| !v.is_finite()) {
            return;
        }
        let x = sol.rows(0, n).into_owned();
        let u: Vec<f64> = sol.rows(n, k).iter().copied().collect();
        let feasible = problem.eq.iter().all(|(row, b)| (row.dot(&x) - b).abs() <= tol * row.norm().max(1.0))
            && problem.ineq.iter().all(|(row, b)| b - row.dot(&x) <= tol * row.norm());
        let dual_ok = self.active.iter().zip(&u).all(|(c, &v)| matches!(c, Constraint::Eq(..)) || v >= 0.0);
        if feasible && dual_ok {
            self.x = x;
            self.u = u;
        }
    }

    fn push(&mut self, c: Constraint, u: f64) {
        self.active.push(c);
        self.u.push(u);
    }
}

/// Cholesky factor of `q`, with a small ridge when `q` is only semidefinite.
fn regularized(q: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, QpError> {
    if let Some(c) = q.clone().cholesky() {
        return Ok(c);
    }
    let ridge = 1e-12 * (1.0 + q.amax());
    let n = q.nrows();
    (q + DMatrix::identity(n, n) * ridge).cholesky().ok_or(QpError::NotConvex)
}
