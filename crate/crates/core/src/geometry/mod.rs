//! Halfspace polytopes `{y : A y <= b}` and the operations the controller
//! and the estimator need on them.
//!
//! Everything that needs vertices goes through [`HPolytope::vertices`], which
//! handles lower-dimensional sets by working in their affine hull.

mod norms;
mod vertices;
mod volume;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::qp::{solve_lp, QpError, QpStatus};
use crate::Scalar;

pub use norms::{max_norm_over_vertices, spectral_norm};

pub type VertexList<T> = Vec<DVector<T>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("polytope is unbounded")]
    UnboundedPolytope,
    #[error("volume is only supported up to dimension 4, got {0}")]
    DimensionTooHigh(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Solver(#[from] QpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
}

/// `y = point + basis * t`, `basis` with orthonormal columns.
#[derive(Debug, Clone)]
pub struct AffineHull<T: Scalar> {
    pub point: DVector<T>,
    pub basis: DMatrix<T>,
}

impl<T: Scalar> AffineHull<T> {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

impl<T: Scalar> HPolytope<T> {
    pub fn new(a: DMatrix<T>, b: DVector<T>) -> Result<Self, GeometryError> {
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch(format!(
                "{} rows but {} offsets",
                a.nrows(),
                b.len()
            )));
        }
        Ok(Self { a, b })
    }

    /// Axis-aligned box `lo <= y <= hi`.
    pub fn from_box(lo: &DVector<T>, hi: &DVector<T>) -> Self {
        let d = lo.len();
        assert_eq!(d, hi.len(), "box bounds differ in length");
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for i in 0..d {
            a[(2 * i, i)] = T::one();
            b[2 * i] = hi[i];
            a[(2 * i + 1, i)] = -T::one();
            b[2 * i + 1] = -lo[i];
        }
        Self { a, b }
    }

    /// `{y : |y_i| <= r}`.
    pub fn cube(d: usize, r: T) -> Self {
        Self::from_box(&DVector::from_element(d, -r), &DVector::from_element(d, r))
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_facets(&self) -> usize {
        self.a.nrows()
    }

    /// Rows scaled to unit norm. Zero rows are dropped, or reported as
    /// emptiness when their offset is negative.
    pub fn normalized(&self) -> Result<Self, GeometryError> {
        let tiny = T::default_epsilon() * T::lit(1e3);
        let mut keep = Vec::new();
        for i in 0..self.num_facets() {
            let norm = self.a.row(i).norm();
            if norm > tiny {
                keep.push((i, norm));
            } else if self.b[i] < -T::feas_tol() {
                return Err(GeometryError::EmptyPolytope);
            }
        }
        let mut a = DMatrix::zeros(keep.len(), self.dim());
        let mut b = DVector::zeros(keep.len());
        for (k, &(i, norm)) in keep.iter().enumerate() {
            a.row_mut(k).copy_from(&(self.a.row(i) / norm));
            b[k] = self.b[i] / norm;
        }
        Ok(Self { a, b })
    }

    /// Largest normalized constraint violation at `y` (negative inside).
    pub fn violation(&self, y: &DVector<T>) -> T {
        let mut worst = -T::max_value().unwrap_or(T::one() / T::default_epsilon());
        for i in 0..self.num_facets() {
            let norm = self.a.row(i).norm();
            let r = self.a.row(i).dot(&y.transpose()) - self.b[i];
            let v = if norm > T::zero() { r / norm } else { r };
            worst = worst.max(v);
        }
        worst
    }

    pub fn contains_point(&self, y: &DVector<T>) -> bool {
        self.contains_point_tol(y, T::feas_tol())
    }

    pub fn contains_point_tol(&self, y: &DVector<T>, tol: T) -> bool {
        self.num_facets() == 0 || self.violation(y) <= tol
    }

    /// A point attaining `max c'y`.
    pub fn maximizer(&self, c: &DVector<T>) -> Result<DVector<T>, GeometryError> {
        lp_argmax(&self.a, &self.b, c)
    }

    /// `max c'y` over the polytope.
    pub fn support(&self, c: &DVector<T>) -> Result<T, GeometryError> {
        Ok(c.dot(&self.maximizer(c)?))
    }

    pub fn is_empty(&self) -> Result<bool, GeometryError> {
        match self.maximizer(&DVector::zeros(self.dim())) {
            Ok(_) => Ok(false),
            Err(GeometryError::EmptyPolytope) => Ok(true),
            Err(e) => Err(e),
        }
    }

    /// Checks boundedness with an LP along each signed coordinate direction.
    pub fn check_bounded(&self) -> Result<(), GeometryError> {
        let d = self.dim();
        for i in 0..d {
            for s in [T::one(), -T::one()] {
                let mut c = DVector::zeros(d);
                c[i] = s;
                self.maximizer(&c)?;
            }
        }
        Ok(())
    }

    /// Center and radius of the largest inscribed ball, radius capped at
    /// `cap`.
    pub fn chebyshev(&self, cap: T) -> Result<(DVector<T>, T), GeometryError> {
        let p = self.normalized()?;
        let (m, d) = (p.num_facets(), p.dim());
        let mut a = DMatrix::zeros(m + 1, d + 1);
        a.view_mut((0, 0), (m, d)).copy_from(&p.a);
        for i in 0..m {
            a[(i, d)] = T::one();
        }
        a[(m, d)] = T::one();
        let mut b = DVector::zeros(m + 1);
        b.rows_mut(0, m).copy_from(&p.b);
        b[m] = cap;
        let mut c = DVector::zeros(d + 1);
        c[d] = T::one();
        let x = lp_argmax(&a, &b, &c)?;
        Ok((x.rows(0, d).into_owned(), x[d]))
    }

    /// True when every point of `other` satisfies every row of `self`
    /// within tolerance.
    pub fn contains(&self, other: &HPolytope<T>) -> Result<bool, GeometryError> {
        self.check_dim(other)?;
        let tol = T::feas_tol();
        for i in 0..self.num_facets() {
            let row = self.a.row(i).transpose();
            let norm = row.norm();
            match other.support(&row) {
                Ok(s) => {
                    if s > self.b[i] + tol * norm.max(T::one()) {
                        return Ok(false);
                    }
                }
                Err(GeometryError::UnboundedPolytope) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    /// Two-sided containment.
    pub fn set_eq(&self, other: &HPolytope<T>) -> Result<bool, GeometryError> {
        Ok(self.contains(other)? && other.contains(self)?)
    }

    pub fn intersect(&self, other: &HPolytope<T>) -> Result<Self, GeometryError> {
        self.check_dim(other)?;
        Ok(self.with_rows(&other.a, &other.b))
    }

    pub fn with_rows(&self, a: &DMatrix<T>, b: &DVector<T>) -> Self {
        let (m1, m2, d) = (self.num_facets(), a.nrows(), self.dim());
        let mut na = DMatrix::zeros(m1 + m2, d);
        na.view_mut((0, 0), (m1, d)).copy_from(&self.a);
        na.view_mut((m1, 0), (m2, d)).copy_from(a);
        let mut nb = DVector::zeros(m1 + m2);
        nb.rows_mut(0, m1).copy_from(&self.b);
        nb.rows_mut(m1, m2).copy_from(b);
        Self { a: na, b: nb }
    }

    /// `s * P` for `s > 0`.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            a: self.a.clone(),
            b: &self.b * s,
        }
    }

    /// `P + t`.
    pub fn translated(&self, t: &DVector<T>) -> Self {
        Self {
            a: self.a.clone(),
            b: &self.b + &self.a * t,
        }
    }

    /// Drops redundant rows, one LP per row. Rows are normalized in the
    /// result.
    pub fn prune(&self) -> Result<Self, GeometryError> {
        let p = self.normalized()?;
        if p.is_empty()? {
            return Err(GeometryError::EmptyPolytope);
        }
        // Removals accumulate, so a row goes only when it is redundant to well
        // inside the containment tolerance; otherwise the pruned set could
        // poke out of the original by more than `feas_tol`.
        let tol = T::feas_tol() * T::lit(1e-2);
        let m = p.num_facets();
        let mut keep = vec![true; m];
        for i in 0..m {
            // Relax row i by one unit so the LP stays bounded.
            let idx: Vec<usize> = (0..m).filter(|&j| keep[j] || j == i).collect();
            let a = p.a.select_rows(idx.iter());
            let mut b = DVector::from_iterator(idx.len(), idx.iter().map(|&j| p.b[j]));
            let pos = idx.iter().position(|&j| j == i).unwrap();
            b[pos] += T::one();
            let c = p.a.row(i).transpose();
            let x = match lp_argmax(&a, &b, &c) {
                Ok(x) => x,
                Err(GeometryError::UnboundedPolytope) => continue,
                Err(e) => return Err(e),
            };
            if c.dot(&x) <= p.b[i] + tol {
                keep[i] = false;
            }
        }
        let idx: Vec<usize> = (0..m).filter(|&j| keep[j]).collect();
        Ok(Self {
            a: p.a.select_rows(idx.iter()),
            b: DVector::from_iterator(idx.len(), idx.iter().map(|&j| p.b[j])),
        })
    }

    /// Affine hull, found by growing a set of feasible points with LPs along
    /// directions orthogonal to their current span.
    pub fn affine_hull(&self) -> Result<AffineHull<T>, GeometryError> {
        let p = self.normalized()?;
        vertices::affine_hull(&p).map(|(hull, _)| hull)
    }

    /// Minimal vertex set. Fails on empty or unbounded polytopes.
    pub fn vertices(&self) -> Result<VertexList<T>, GeometryError> {
        vertices::enumerate(self)
    }

    /// Lebesgue measure, for dimension at most 4. Lower-dimensional sets
    /// have volume zero.
    pub fn volume(&self) -> Result<T, GeometryError> {
        volume::volume(self)
    }

    fn check_dim(&self, other: &HPolytope<T>) -> Result<(), GeometryError> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch(format!(
                "dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

pub(crate) fn lp_argmax<T: Scalar>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    c: &DVector<T>,
) -> Result<DVector<T>, GeometryError> {
    let d = c.len();
    let sol = solve_lp(&-c, a, b, &DMatrix::zeros(0, d), &DVector::zeros(0))?;
    match sol.status {
        QpStatus::Optimal => Ok(sol.x),
        QpStatus::Infeasible => Err(GeometryError::EmptyPolytope),
        QpStatus::Unbounded => Err(GeometryError::UnboundedPolytope),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn unit_box() -> HPolytope<f64> {
        HPolytope::cube(2, 1.0)
    }

    #[test]
    fn support_of_boxes() {
        assert!((unit_box().support(&dvector![1.0, 1.0]).unwrap() - 2.0).abs() < 1e-8);
        let theta = HPolytope::<f64>::from_box(&DVector::zeros(3), &DVector::from_element(3, 0.75));
        let s = theta.support(&dvector![1.0, 1.0, 1.0]).unwrap();
        assert!((s - 2.25).abs() < 1e-8);
    }

    #[test]
    fn containment_of_scaled_boxes() {
        let big = unit_box().scaled(2.0);
        assert!(big.contains(&unit_box()).unwrap());
        assert!(!unit_box().contains(&big).unwrap());
        assert!(unit_box()
            .set_eq(&unit_box().normalized().unwrap())
            .unwrap());
    }

    #[test]
    fn empty_and_unbounded_are_reported() {
        let p = HPolytope::new(nalgebra::dmatrix![1.0; -1.0], dvector![0.0, -1.0]).unwrap();
        assert!(p.is_empty().unwrap());
        let half = HPolytope::new(nalgebra::dmatrix![1.0, 0.0], dvector![1.0]).unwrap();
        assert_eq!(half.check_bounded(), Err(GeometryError::UnboundedPolytope));
    }

    #[test]
    fn prune_drops_redundant_and_duplicate_rows() {
        let extra = nalgebra::dmatrix![1.0, 1.0; 1.0, 0.0; 2.0, 0.0];
        let p = unit_box().with_rows(&extra, &dvector![5.0, 1.0, 2.0]);
        let q = p.prune().unwrap();
        assert_eq!(q.num_facets(), 4);
        assert!(q.set_eq(&unit_box()).unwrap());
    }

    #[test]
    fn chebyshev_ball_of_box() {
        let (c, r) = HPolytope::<f64>::from_box(&dvector![0.0, 0.0], &dvector![4.0, 2.0])
            .chebyshev(10.0)
            .unwrap();
        assert!((r - 1.0).abs() < 1e-8);
        assert!((c[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn translate_moves_support() {
        let p = unit_box().translated(&dvector![3.0, 0.0]);
        assert!((p.support(&dvector![1.0, 0.0]).unwrap() - 4.0).abs() < 1e-8);
        assert!(p.contains_point(&dvector![2.5, 0.5]));
        assert!(!p.contains_point(&dvector![1.5, 1.5]));
    }
}
