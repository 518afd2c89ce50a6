//! Checks of the configured feedback gain and terminal weight.
//!
//! The decrease condition `A_cl' P A_cl + Q + K'RK <= P` is equivalent to the
//! block matrix
//!
//! ```text
//!     [ P - Q - K'RK   A_cl' P ]
//!     [ P A_cl         P       ]  >= 0
//! ```
//!
//! which is affine in `theta`, so checking it at the vertices of the
//! parameter set covers the whole set.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{GeometryError, HPolytope};
use crate::model::{min_eig, AffineParamSystem, ModelError};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("P is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("P is not positive definite (min eigenvalue {0:e})")]
    NonPositiveP(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// `A_cl' P A_cl < P` for every parameter: a common Lyapunov function.
    RobustStability,
    /// `A_cl' P A_cl + Q + K'RK <= P` for every parameter.
    LyapunovBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Fails by less than `1e-4`, typical of matrices rounded for print.
    Marginal,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexReport<T: Scalar> {
    pub theta: DVector<T>,
    pub margin: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate<T: Scalar> {
    pub kind: CertificateKind,
    pub min_eigenvalue: T,
    pub vertex_reports: Vec<VertexReport<T>>,
}

pub const PASS_TOL: f64 = -1e-8;
pub const MARGINAL_TOL: f64 = -1e-4;

impl<T: Scalar> Certificate<T> {
    pub fn passes(&self) -> bool {
        self.min_eigenvalue >= T::lit(PASS_TOL)
    }

    pub fn verdict(&self) -> Verdict {
        if self.passes() {
            Verdict::Pass
        } else if self.min_eigenvalue >= T::lit(MARGINAL_TOL) {
            Verdict::Marginal
        } else {
            Verdict::Fail
        }
    }
}

fn check_p<T: Scalar>(p: &DMatrix<T>) -> Result<(), CertifyError> {
    let asym = (p - p.transpose()).amax();
    if asym > T::lit(1e-12) * (T::one() + p.amax()) {
        return Err(CertifyError::NotSymmetric(asym.as_f64()));
    }
    let e = min_eig(p);
    if e <= T::zero() {
        return Err(CertifyError::NonPositiveP(e.as_f64()));
    }
    Ok(())
}

fn block<T: Scalar>(top_left: &DMatrix<T>, acl: &DMatrix<T>, p: &DMatrix<T>) -> DMatrix<T> {
    let n = p.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let pa = p * acl;
    m.view_mut((0, 0), (n, n)).copy_from(top_left);
    m.view_mut((0, n), (n, n)).copy_from(&pa.transpose());
    m.view_mut((n, 0), (n, n)).copy_from(&pa);
    m.view_mut((n, n), (n, n)).copy_from(p);
    m
}

fn vertex_check<T: Scalar>(
    sys: &AffineParamSystem<T>,
    k: &DMatrix<T>,
    p: &DMatrix<T>,
    top_left: &DMatrix<T>,
    theta: &HPolytope<T>,
    kind: CertificateKind,
) -> Result<Certificate<T>, CertifyError> {
    check_p(p)?;
    let mut reports = Vec::new();
    let mut worst = T::max_value().unwrap();
    for v in theta.vertices()? {
        let acl = sys.closed_loop(&v, k)?;
        let margin = min_eig(&block(top_left, &acl, p));
        worst = worst.min(margin);
        reports.push(VertexReport { theta: v, margin });
    }
    Ok(Certificate {
        kind,
        min_eigenvalue: worst,
        vertex_reports: reports,
    })
}

/// Vertex check of `A_cl' P A_cl + Q + K'RK <= P` over `theta`.
pub fn verify_p<T: Scalar>(
    sys: &AffineParamSystem<T>,
    k: &DMatrix<T>,
    p: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    theta: &HPolytope<T>,
) -> Result<Certificate<T>, CertifyError> {
    let top_left = p - q - k.transpose() * r * k;
    vertex_check(sys, k, p, &top_left, theta, CertificateKind::LyapunovBound)
}

/// Vertex check of `A_cl' P A_cl <= P - eps I` with `eps = 1e-9 |P|`,
/// a common quadratic Lyapunov function for every parameter.
pub fn verify_robust_stability<T: Scalar>(
    sys: &AffineParamSystem<T>,
    k: &DMatrix<T>,
    p: &DMatrix<T>,
    theta: &HPolytope<T>,
) -> Result<Certificate<T>, CertifyError> {
    let n = p.nrows();
    let top_left = p - DMatrix::identity(n, n) * (T::lit(1e-9) * p.amax());
    vertex_check(
        sys,
        k,
        p,
        &top_left,
        theta,
        CertificateKind::RobustStability,
    )
}

/// Spectral radius of a square matrix.
pub fn spectral_radius<T: Scalar>(m: &DMatrix<T>) -> T {
    m.complex_eigenvalues()
        .iter()
        .map(|c| (c.re * c.re + c.im * c.im).sqrt())
        .fold(T::zero(), |a, b| a.max(b))
}

/// `rho(A_cl)` at each vertex of `theta`. Informational: stability at the
/// vertices alone does not imply stability over the set.
pub fn spectral_radius_report<T: Scalar>(
    sys: &AffineParamSystem<T>,
    k: &DMatrix<T>,
    theta: &HPolytope<T>,
) -> Result<Vec<(DVector<T>, T)>, CertifyError> {
    let mut out = Vec::new();
    for v in theta.vertices()? {
        let rho = spectral_radius(&sys.closed_loop(&v, k)?);
        out.push((v, rho));
    }
    Ok(out)
}
