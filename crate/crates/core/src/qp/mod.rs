//! Dense convex quadratic programming.
//!
//! Programs have the form
//!
//! ```text
//!     minimize     1/2 x' H x + g' x
//!     subject to   A_in x <= b_in
//!                  A_eq x  = b_eq
//! ```
//!
//! with `H` symmetric positive semidefinite. Linear programs are the special
//! case `H = 0`. The solver is a Mehrotra predictor-corrector primal-dual
//! interior-point method on the normal-equation form of the KKT system. When
//! it fails to converge, the program is classified with two auxiliary LPs: a
//! phase-1 program (positive optimal value proves infeasibility) and a
//! recession-direction program (a descent ray proves unboundedness).
//!
//! Optimality is never taken on the solver's word: [`kkt_residuals`]
//! recomputes the certificate from the returned primal-dual pair.

mod ipm;
mod kkt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::Scalar;

pub use kkt::{kkt_residuals, KktResiduals};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("hessian is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("hessian is not positive semidefinite (min eigenvalue {0:e})")]
    NotConvex(f64),
    #[error("no certificate after {0} interior-point iterations")]
    MaxIterations(usize),
}

/// A convex QP in inequality/equality form. See the module docs for the sign
/// and scaling conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadProgram<T: Scalar> {
    pub hessian: DMatrix<T>,
    pub linear: DVector<T>,
    pub a_ineq: DMatrix<T>,
    pub b_ineq: DVector<T>,
    pub a_eq: DMatrix<T>,
    pub b_eq: DVector<T>,
}

impl<T: Scalar> QuadProgram<T> {
    /// Unconstrained program over `linear.len()` variables.
    pub fn new(hessian: DMatrix<T>, linear: DVector<T>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
        }
    }

    /// Linear program `min g'x`.
    pub fn linear(linear: DVector<T>) -> Self {
        let n = linear.len();
        Self::new(DMatrix::zeros(n, n), linear)
    }

    pub fn with_inequalities(mut self, a: DMatrix<T>, b: DVector<T>) -> Self {
        self.a_ineq = a;
        self.b_ineq = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<T>, b: DVector<T>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.b_ineq.len() + self.b_eq.len()
    }

    /// Objective value at `x`.
    pub fn objective(&self, x: &DVector<T>) -> T {
        let hx = &self.hessian * x;
        hx.dot(x) * T::lit(0.5) + self.linear.dot(x)
    }

    /// Checks shapes, symmetry (1e-12 relative) and semidefiniteness
    /// (minimum eigenvalue above -1e-10 relative).
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        if self.hessian.shape() != (n, n) {
            return Err(QpError::DimensionMismatch(format!(
                "hessian is {:?}, expected ({n}, {n})",
                self.hessian.shape()
            )));
        }
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return Err(QpError::DimensionMismatch(format!(
                "inequality block is {:?} with rhs {}",
                self.a_ineq.shape(),
                self.b_ineq.len()
            )));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(QpError::DimensionMismatch(format!(
                "equality block is {:?} with rhs {}",
                self.a_eq.shape(),
                self.b_eq.len()
            )));
        }
        if n == 0 {
            return Ok(());
        }
        let scale = T::one() + self.hessian.amax();
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > T::lit(1e-12) * scale {
            return Err(QpError::NotSymmetric(asym.as_f64()));
        }
        if self.hessian.amax() > T::zero() {
            let sym = (&self.hessian + self.hessian.transpose()) * T::lit(0.5);
            let min_eig = sym.symmetric_eigenvalues().min();
            if min_eig < -T::lit(1e-10) * scale {
                return Err(QpError::NotConvex(min_eig.as_f64()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: Scalar> {
    pub status: QpStatus,
    /// Primal point. For `Unbounded` this is a feasible point; for
    /// `Infeasible` it is the phase-1 minimizer.
    pub x: DVector<T>,
    pub objective: T,
    pub duals_ineq: DVector<T>,
    pub duals_eq: DVector<T>,
    /// Optimal phase-1 violation; positive exactly when `Infeasible`.
    pub infeasibility: T,
    /// Descent ray `d` with `A_in d <= 0`, `A_eq d = 0`, `H d = 0`,
    /// `g'd < 0`, present when `Unbounded`.
    pub ray: Option<DVector<T>>,
    pub iterations: usize,
    /// Diagonal primal regularization added to the Newton systems.
    pub regularization: T,
}

impl<T: Scalar> QpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T: Scalar> {
    /// Iteration cap; `None` means `10 * (vars + constraints)`.
    pub max_iter: Option<usize>,
    /// Relative residual target for convergence.
    pub tol: T,
    /// Primal diagonal regularization of the Newton system.
    pub regularization: T,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: None,
            tol: T::ipm_tol(),
            regularization: T::ipm_tol() * T::lit(1e-2),
        }
    }
}

/// Solves a convex QP with default options.
pub fn solve_qp<T: Scalar>(p: &QuadProgram<T>) -> Result<QpSolution<T>, QpError> {
    solve_qp_with(p, &SolverOptions::default())
}

/// Solves `min g'x` subject to the given constraints.
pub fn solve_lp<T: Scalar>(
    g: &DVector<T>,
    a_ineq: &DMatrix<T>,
    b_ineq: &DVector<T>,
    a_eq: &DMatrix<T>,
    b_eq: &DVector<T>,
) -> Result<QpSolution<T>, QpError> {
    let p = QuadProgram::linear(g.clone())
        .with_inequalities(a_ineq.clone(), b_ineq.clone())
        .with_equalities(a_eq.clone(), b_eq.clone());
    solve_qp(&p)
}

pub fn solve_qp_with<T: Scalar>(
    p: &QuadProgram<T>,
    opts: &SolverOptions<T>,
) -> Result<QpSolution<T>, QpError> {
    p.validate()?;
    let n = p.num_vars();
    let max_iter = opts
        .max_iter
        .unwrap_or(10 * (n + p.num_constraints()))
        .max(50);

    let scaled = ipm::Scaled::new(p);
    if let Some(bad) = scaled.trivially_infeasible {
        return Ok(infeasible(
            p,
            DVector::zeros(n),
            bad,
            0,
            opts.regularization,
        ));
    }
    let outcome = ipm::run(&scaled.program, opts.tol, opts.regularization, max_iter);
    match outcome {
        ipm::Outcome::Converged(it) => {
            let (duals_ineq, duals_eq) = scaled.unscale_duals(&it.lam, &it.y);
            Ok(QpSolution {
                status: QpStatus::Optimal,
                objective: p.objective(&it.x),
                x: it.x,
                duals_ineq,
                duals_eq,
                infeasibility: T::zero(),
                ray: None,
                iterations: it.iterations,
                regularization: opts.regularization,
            })
        }
        ipm::Outcome::Failed { iterations } => classify(p, opts, iterations),
    }
}

fn infeasible<T: Scalar>(
    p: &QuadProgram<T>,
    x: DVector<T>,
    violation: T,
    iterations: usize,
    regularization: T,
) -> QpSolution<T> {
    QpSolution {
        status: QpStatus::Infeasible,
        objective: T::max_value().unwrap_or(T::one() / T::default_epsilon()),
        duals_ineq: DVector::zeros(p.b_ineq.len()),
        duals_eq: DVector::zeros(p.b_eq.len()),
        x,
        infeasibility: violation,
        ray: None,
        iterations,
        regularization,
    }
}

/// Decides between infeasible, unbounded and a genuine solver failure after
/// the main iteration did not converge.
fn classify<T: Scalar>(
    p: &QuadProgram<T>,
    opts: &SolverOptions<T>,
    iterations: usize,
) -> Result<QpSolution<T>, QpError> {
    let tol = T::feas_tol();
    let (x_feas, violation) = phase_one(p, opts)?;
    if violation > tol {
        return Ok(infeasible(
            p,
            x_feas,
            violation,
            iterations,
            opts.regularization,
        ));
    }
    if let Some(ray) = recession_ray(p, opts)? {
        return Ok(QpSolution {
            status: QpStatus::Unbounded,
            objective: -T::max_value().unwrap_or(T::one() / T::default_epsilon()),
            duals_ineq: DVector::zeros(p.b_ineq.len()),
            duals_eq: DVector::zeros(p.b_eq.len()),
            x: x_feas,
            infeasibility: T::zero(),
            ray: Some(ray),
            iterations,
            regularization: opts.regularization,
        });
    }
    Err(QpError::MaxIterations(iterations))
}

/// `min t` s.t. `A_in x - t <= b_in`, `|A_eq x - b_eq| <= t`, `t >= -1`,
/// inside a large box. Returns the minimizer and `max(t, 0)`.
pub(crate) fn phase_one<T: Scalar>(
    p: &QuadProgram<T>,
    opts: &SolverOptions<T>,
) -> Result<(DVector<T>, T), QpError> {
    let n = p.num_vars();
    let mi = p.b_ineq.len();
    let me = p.b_eq.len();
    let big = box_radius(p);
    let rows = mi + 2 * me + 1 + 2 * n;
    let mut a = DMatrix::zeros(rows, n + 1);
    let mut b = DVector::zeros(rows);
    let mut r = 0;
    for i in 0..mi {
        a.view_mut((r, 0), (1, n)).copy_from(&p.a_ineq.row(i));
        a[(r, n)] = -T::one();
        b[r] = p.b_ineq[i];
        r += 1;
    }
    for i in 0..me {
        a.view_mut((r, 0), (1, n)).copy_from(&p.a_eq.row(i));
        a[(r, n)] = -T::one();
        b[r] = p.b_eq[i];
        r += 1;
        a.view_mut((r, 0), (1, n)).copy_from(&(-p.a_eq.row(i)));
        a[(r, n)] = -T::one();
        b[r] = -p.b_eq[i];
        r += 1;
    }
    a[(r, n)] = -T::one();
    b[r] = T::one();
    r += 1;
    for j in 0..n {
        a[(r, j)] = T::one();
        b[r] = big;
        r += 1;
        a[(r, j)] = -T::one();
        b[r] = big;
        r += 1;
    }
    let mut g = DVector::zeros(n + 1);
    g[n] = T::one();
    let aux = QuadProgram::linear(g).with_inequalities(a, b);
    let scaled = ipm::Scaled::new(&aux);
    match ipm::run(&scaled.program, opts.tol, opts.regularization, 500) {
        ipm::Outcome::Converged(it) => {
            let x = it.x.rows(0, n).into_owned();
            let t = p.max_violation(&x);
            Ok((x, t.max(T::zero())))
        }
        ipm::Outcome::Failed { iterations } => Err(QpError::MaxIterations(iterations)),
    }
}

/// Searches for a feasible descent ray within the unit box.
fn recession_ray<T: Scalar>(
    p: &QuadProgram<T>,
    opts: &SolverOptions<T>,
) -> Result<Option<DVector<T>>, QpError> {
    let n = p.num_vars();
    let mi = p.b_ineq.len();
    let tol = T::feas_tol();
    // H d = 0 is imposed as |H d| <= tol to stay robust to rank deficiency.
    let rows = mi + 2 * n + 2 * n;
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    a.view_mut((0, 0), (mi, n)).copy_from(&p.a_ineq);
    let mut r = mi;
    for j in 0..n {
        a.view_mut((r, 0), (1, n)).copy_from(&p.hessian.row(j));
        b[r] = tol;
        r += 1;
        a.view_mut((r, 0), (1, n)).copy_from(&(-p.hessian.row(j)));
        b[r] = tol;
        r += 1;
    }
    for j in 0..n {
        a[(r, j)] = T::one();
        b[r] = T::one();
        r += 1;
        a[(r, j)] = -T::one();
        b[r] = T::one();
        r += 1;
    }
    let aux = QuadProgram::linear(p.linear.clone())
        .with_inequalities(a, b)
        .with_equalities(p.a_eq.clone(), DVector::zeros(p.b_eq.len()));
    let scaled = ipm::Scaled::new(&aux);
    match ipm::run(&scaled.program, opts.tol, opts.regularization, 500) {
        ipm::Outcome::Converged(it) => {
            let slope = p.linear.dot(&it.x);
            if slope < -T::lit(1e3) * tol * (T::one() + p.linear.amax()) {
                Ok(Some(it.x))
            } else {
                Ok(None)
            }
        }
        ipm::Outcome::Failed { iterations } => Err(QpError::MaxIterations(iterations)),
    }
}

fn box_radius<T: Scalar>(p: &QuadProgram<T>) -> T {
    let scale = T::one() + p.b_ineq.amax().max(p.b_eq.amax());
    T::lit(1e6) * scale
}

impl<T: Scalar> QuadProgram<T> {
    /// Largest constraint violation at `x` (inequality excess or equality
    /// residual magnitude); zero when feasible.
    pub fn max_violation(&self, x: &DVector<T>) -> T {
        let mut worst = T::zero();
        if !self.b_ineq.is_empty() {
            let r = &self.a_ineq * x - &self.b_ineq;
            worst = worst.max(r.max());
        }
        if !self.b_eq.is_empty() {
            let r = &self.a_eq * x - &self.b_eq;
            worst = worst.max(r.amax());
        }
        worst
    }
}
