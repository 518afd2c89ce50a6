//! Uncertain linear system with affine parameter dependence, its polytopic
//! constraint set and the quadratic stage cost.
//!
//! `x+ = A(theta) x + B(theta) u`, `A(theta) = A_0 + sum_i theta_i A_i` (and
//! likewise `B`), subject to `F x + G u <= 1`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{GeometryError, HPolytope};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("constraint set is unbounded")]
    UnboundedConstraints,
    #[error("{0} is not positive definite (min eigenvalue {1:e})")]
    NotPositiveDefinite(&'static str, f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn mismatch(msg: String) -> ModelError {
    ModelError::DimensionMismatch(msg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineParamSystem<T: Scalar> {
    /// `A_0 .. A_p`.
    pub a: Vec<DMatrix<T>>,
    /// `B_0 .. B_p`.
    pub b: Vec<DMatrix<T>>,
    /// Prior parameter set.
    pub theta: HPolytope<T>,
}

impl<T: Scalar> AffineParamSystem<T> {
    pub fn new(
        a: Vec<DMatrix<T>>,
        b: Vec<DMatrix<T>>,
        theta: HPolytope<T>,
    ) -> Result<Self, ModelError> {
        if a.is_empty() || a.len() != b.len() {
            return Err(mismatch(format!(
                "{} state matrices and {} input matrices",
                a.len(),
                b.len()
            )));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        for (i, (ai, bi)) in a.iter().zip(&b).enumerate() {
            if ai.shape() != (n, n) || bi.shape() != (n, m) {
                return Err(mismatch(format!(
                    "term {i}: A is {:?}, B is {:?}, expected ({n}, {n}) and ({n}, {m})",
                    ai.shape(),
                    bi.shape()
                )));
            }
        }
        if theta.dim() != a.len() - 1 {
            return Err(mismatch(format!(
                "parameter set has dimension {}, expected {}",
                theta.dim(),
                a.len() - 1
            )));
        }
        theta.check_bounded()?;
        Ok(Self { a, b, theta })
    }

    pub fn n(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn m(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn p(&self) -> usize {
        self.a.len() - 1
    }

    /// `(A(theta), B(theta))`.
    pub fn assemble(&self, theta: &DVector<T>) -> Result<(DMatrix<T>, DMatrix<T>), ModelError> {
        if theta.len() != self.p() {
            return Err(mismatch(format!(
                "parameter has length {}, expected {}",
                theta.len(),
                self.p()
            )));
        }
        let mut a = self.a[0].clone();
        let mut b = self.b[0].clone();
        for (i, &t) in theta.iter().enumerate() {
            a += &self.a[i + 1] * t;
            b += &self.b[i + 1] * t;
        }
        Ok((a, b))
    }

    /// `A(theta) + B(theta) K`.
    pub fn closed_loop(
        &self,
        theta: &DVector<T>,
        k: &DMatrix<T>,
    ) -> Result<DMatrix<T>, ModelError> {
        let (a, b) = self.assemble(theta)?;
        Ok(a + b * k)
    }

    pub fn step(
        &self,
        theta: &DVector<T>,
        x: &DVector<T>,
        u: &DVector<T>,
    ) -> Result<DVector<T>, ModelError> {
        self.check_xu(x, u)?;
        let (a, b) = self.assemble(theta)?;
        Ok(a * x + b * u)
    }

    /// `D(x, u)`, the `n x p` matrix with columns `A_i x + B_i u`.
    pub fn regressor(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DMatrix<T>, ModelError> {
        self.check_xu(x, u)?;
        let mut d = DMatrix::zeros(self.n(), self.p());
        for i in 0..self.p() {
            d.set_column(i, &(&self.a[i + 1] * x + &self.b[i + 1] * u));
        }
        Ok(d)
    }

    /// `A_0 x + B_0 u`.
    pub fn nominal_part(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.a[0] * x + &self.b[0] * u
    }

    fn check_xu(&self, x: &DVector<T>, u: &DVector<T>) -> Result<(), ModelError> {
        if x.len() != self.n() || u.len() != self.m() {
            return Err(mismatch(format!(
                "state/input of length {}/{}, expected {}/{}",
                x.len(),
                u.len(),
                self.n(),
                self.m()
            )));
        }
        Ok(())
    }
}

/// `{(x, u) : F x + G u <= 1}`, bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet<T: Scalar> {
    pub f: DMatrix<T>,
    pub g: DMatrix<T>,
}

impl<T: Scalar> ConstraintSet<T> {
    pub fn new(f: DMatrix<T>, g: DMatrix<T>) -> Result<Self, ModelError> {
        if f.nrows() != g.nrows() {
            return Err(mismatch(format!(
                "F has {} rows, G has {}",
                f.nrows(),
                g.nrows()
            )));
        }
        let set = Self { f, g };
        match set.polytope().check_bounded() {
            Ok(()) => Ok(set),
            Err(GeometryError::UnboundedPolytope) => Err(ModelError::UnboundedConstraints),
            Err(e) => Err(e.into()),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.f.nrows()
    }

    /// The set as a polytope over the stacked vector `(x, u)`.
    pub fn polytope(&self) -> HPolytope<T> {
        let (c, n, m) = (self.f.nrows(), self.f.ncols(), self.g.ncols());
        let mut a = DMatrix::zeros(c, n + m);
        a.view_mut((0, 0), (c, n)).copy_from(&self.f);
        a.view_mut((0, n), (c, m)).copy_from(&self.g);
        HPolytope {
            a,
            b: DVector::from_element(c, T::one()),
        }
    }

    /// Largest entry of `F x + G u - 1`.
    pub fn violation(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        (&self.f * x + &self.g * u).add_scalar(-T::one()).max()
    }

    pub fn in_constraints(&self, x: &DVector<T>, u: &DVector<T>) -> bool {
        self.violation(x, u) <= T::feas_tol()
    }

    /// Same set with the right-hand side multiplied by `s`.
    pub fn inflated(&self, s: T) -> Self {
        Self {
            f: &self.f / s,
            g: &self.g / s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageCost<T: Scalar> {
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

pub(crate) fn min_eig<T: Scalar>(m: &DMatrix<T>) -> T {
    let sym = (m + m.transpose()) * T::lit(0.5);
    sym.symmetric_eigenvalues().min()
}

impl<T: Scalar> StageCost<T> {
    pub fn new(q: DMatrix<T>, r: DMatrix<T>) -> Result<Self, ModelError> {
        for (name, m) in [("Q", &q), ("R", &r)] {
            if !m.is_square() || m.nrows() == 0 {
                return Err(mismatch(format!("{name} is {:?}", m.shape())));
            }
            let e = min_eig(m);
            if e <= T::lit(1e-10) {
                return Err(ModelError::NotPositiveDefinite(name, e.as_f64()));
            }
        }
        Ok(Self { q, r })
    }

    /// `x'Qx + u'Ru`.
    pub fn stage_cost(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        (&self.q * x).dot(x) + (&self.r * u).dot(u)
    }
}

/// Compact description of a membership set at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetSummary<T: Scalar> {
    pub facets: usize,
    pub vertices: usize,
    pub hull_dim: usize,
    pub volume: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog<T: Scalar> {
    pub states: Vec<DVector<T>>,
    pub inputs: Vec<DVector<T>>,
    pub stage_costs: Vec<T>,
    pub estimates: Vec<DVector<T>>,
    pub membership_sets: Vec<SetSummary<T>>,
    pub values: Vec<T>,
}

impl<T: Scalar> Default for TrajectoryLog<T> {
    fn default() -> Self {
        Self {
            states: Vec::new(),
            inputs: Vec::new(),
            stage_costs: Vec::new(),
            estimates: Vec::new(),
            membership_sets: Vec::new(),
            values: Vec::new(),
        }
    }
}

impl<T: Scalar> TrajectoryLog<T> {
    pub fn total_cost(&self) -> T {
        self.stage_costs.iter().copied().sum()
    }

    /// Lengths agree and every stored stage cost matches its state/input
    /// pair.
    pub fn is_consistent(&self, cost: &StageCost<T>) -> bool {
        let k = self.inputs.len();
        self.states.len() == k + 1
            && self.stage_costs.len() == k
            && self
                .inputs
                .iter()
                .zip(&self.states)
                .zip(&self.stage_costs)
                .all(|((u, x), &c)| {
                    let expect = cost.stage_cost(x, u);
                    (c - expect).abs() <= T::lit(1e-10) * (T::one() + expect)
                })
    }
}
