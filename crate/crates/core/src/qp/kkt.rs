//! Independent optimality certificate.

use nalgebra::DVector;

use super::{QpSolution, QuadProgram};
use crate::Scalar;

/// Infinity-norm residuals of the KKT conditions at a primal-dual pair, in
/// the program's original scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals<T: Scalar> {
    /// Largest constraint violation.
    pub primal: T,
    /// `|H x + g + A_in' lam + A_eq' y|`.
    pub dual: T,
    /// Largest `|lam_i * (b_i - a_i x)|`.
    pub complementarity: T,
    /// Largest negative part of `lam`.
    pub dual_sign: T,
    /// Magnitude of the data the residuals are measured against.
    pub scale: T,
}

impl<T: Scalar> KktResiduals<T> {
    /// Primal residual within `feas_tol`, the others within `100 * feas_tol`,
    /// all relative to `1 + scale`.
    pub fn certified(&self) -> bool {
        let tol = T::feas_tol() * (T::one() + self.scale);
        let loose = tol * T::lit(100.0);
        self.primal <= tol
            && self.dual <= loose
            && self.complementarity <= loose
            && self.dual_sign <= loose
    }

    pub fn max(&self) -> T {
        self.primal
            .max(self.dual)
            .max(self.complementarity)
            .max(self.dual_sign)
    }
}

pub fn kkt_residuals<T: Scalar>(p: &QuadProgram<T>, sol: &QpSolution<T>) -> KktResiduals<T> {
    let x = &sol.x;
    let lam = &sol.duals_ineq;
    let y = &sol.duals_eq;
    let stat = &p.hessian * x + &p.linear + p.a_ineq.transpose() * lam + p.a_eq.transpose() * y;
    let slack: DVector<T> = &p.b_ineq - &p.a_ineq * x;
    let complementarity = lam
        .iter()
        .zip(slack.iter())
        .fold(T::zero(), |acc, (&l, &s)| acc.max((l * s).abs()));
    let dual_sign = lam.iter().fold(T::zero(), |acc, &l| acc.max(-l));
    let scale = p
        .linear
        .amax()
        .max(p.b_ineq.amax())
        .max(p.b_eq.amax())
        .max(p.hessian.amax() * x.amax());
    KktResiduals {
        primal: p.max_violation(x),
        dual: stat.amax(),
        complementarity,
        dual_sign,
        scale,
    }
}
