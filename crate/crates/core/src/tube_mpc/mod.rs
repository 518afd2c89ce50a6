//! Homothetic tube MPC.
//!
//! Inputs are parametrized as `u = K x + v`. The state is confined to tubes
//! `{z_l} + alpha_l X0` where `X0 = {x : H0 x <= 1}` is a fixed
//! cross-section. Each tube must contain the image of the previous one under
//! every parameter in the membership set, satisfy the constraints, and end
//! in a terminal set over `(z, alpha)`. The cost is evaluated along the
//! nominal trajectory predicted with the point estimate.

mod ocp;
mod synth;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{GeometryError, HPolytope};
use crate::model::ModelError;
use crate::qp::QpError;
use crate::Scalar;

pub use ocp::{
    build_ocp, check_tube, control_input, max_feasible_scale, solve_ocp, solve_ocp_at, OcpLayout,
    TubeCheck,
};
pub use synth::{contraction_factors, synth_cross_section, synth_terminal_set};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TubeError {
    #[error("cross-section must contain the origin in its interior")]
    OriginNotInterior,
    #[error("synthesis failed: {0}")]
    SynthesisFailed(String),
    #[error("tube program is infeasible")]
    OcpInfeasible,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubeConfig<T: Scalar> {
    pub horizon: usize,
    pub k: DMatrix<T>,
    pub p: DMatrix<T>,
    /// Rows of `H0` with `X0 = {x : H0 x <= 1}`.
    pub h0: DMatrix<T>,
    pub x0_vertices: Vec<DVector<T>>,
    /// Terminal set over the stacked `(z, alpha)`.
    pub xf: HPolytope<T>,
}

impl<T: Scalar> TubeConfig<T> {
    pub fn new(
        horizon: usize,
        k: DMatrix<T>,
        p: DMatrix<T>,
        x0: &HPolytope<T>,
        xf: HPolytope<T>,
    ) -> Result<Self, TubeError> {
        let n = x0.dim();
        if k.ncols() != n || p.shape() != (n, n) || xf.dim() != n + 1 || horizon == 0 {
            return Err(TubeError::DimensionMismatch(format!(
                "K {:?}, P {:?}, X0 in R^{n}, Xf in R^{}, N = {horizon}",
                k.shape(),
                p.shape(),
                xf.dim()
            )));
        }
        let h0 = normalize_cross_section(x0)?;
        let x0_vertices = HPolytope {
            a: h0.clone(),
            b: DVector::from_element(h0.nrows(), T::one()),
        }
        .vertices()?;
        Ok(Self {
            horizon,
            k,
            p,
            h0,
            x0_vertices,
            xf,
        })
    }

    pub fn n(&self) -> usize {
        self.h0.ncols()
    }

    pub fn m(&self) -> usize {
        self.k.nrows()
    }

    pub fn cross_section(&self) -> HPolytope<T> {
        HPolytope {
            a: self.h0.clone(),
            b: DVector::from_element(self.h0.nrows(), T::one()),
        }
    }

    /// `max_r H0_r (x - z) - alpha`; nonpositive iff `x` is in the tube.
    pub fn tube_excess(&self, x: &DVector<T>, z: &DVector<T>, alpha: T) -> T {
        (&self.h0 * (x - z)).max() - alpha
    }
}

/// Rewrites `{x : A x <= b}` with `b > 0` as `{x : H0 x <= 1}`.
pub(crate) fn normalize_cross_section<T: Scalar>(
    x0: &HPolytope<T>,
) -> Result<DMatrix<T>, TubeError> {
    let p = x0.prune()?;
    let mut h0 = p.a.clone();
    for i in 0..p.num_facets() {
        if p.b[i] <= T::flat_tol() {
            return Err(TubeError::OriginNotInterior);
        }
        h0.row_mut(i).scale_mut(T::one() / p.b[i]);
    }
    Ok(h0)
}

/// Optimal tube program solution.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeDecision<T: Scalar> {
    pub z: Vec<DVector<T>>,
    pub alpha: Vec<T>,
    pub v: Vec<DVector<T>>,
    /// Optimal cost `V_N`.
    pub value: T,
    /// Nominal predicted states `x_hat_{l|k}`.
    pub nominal: Vec<DVector<T>>,
    pub iterations: usize,
    pub regularization: T,
}

impl<T: Scalar> TubeDecision<T> {
    /// Cost recomputed from the nominal states and inputs.
    pub fn recomputed_value(&self, cfg: &TubeConfig<T>, q: &DMatrix<T>, r: &DMatrix<T>) -> T {
        let n = self.v.len();
        let mut total = T::zero();
        for l in 0..n {
            let x = &self.nominal[l];
            let u = &cfg.k * x + &self.v[l];
            total += (q * x).dot(x) + (r * &u).dot(&u);
        }
        let xn = &self.nominal[n];
        total + (&cfg.p * xn).dot(xn)
    }
}
