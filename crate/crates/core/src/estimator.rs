//! Set-membership estimation of the parameter set together with a
//! projected-gradient point estimate.
//!
//! Every observed transition `(x, u) -> x+` confines the parameter to the
//! affine set `{theta : D(x, u) theta = x+ - A_0 x - B_0 u}`; the membership
//! set is the running intersection of these (as thin bands). The point
//! estimate takes one gradient step on the squared one-step prediction error
//! with gain `mu` and projects back onto the prior set.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{spectral_norm, GeometryError, HPolytope};
use crate::model::{AffineParamSystem, ConstraintSet, ModelError};
use crate::qp::{solve_qp, QpError, QuadProgram};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("regressor vanishes on the constraint set; supply mu explicitly")]
    DegenerateRegressor,
    #[error("membership set became empty; the data are inconsistent with the model")]
    EmptyMembershipSet,
    #[error("projection failed: {0}")]
    Projection(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState<T: Scalar> {
    pub theta_hat: DVector<T>,
    pub set: HPolytope<T>,
    pub mu: T,
    /// Running sum of squared one-step prediction errors.
    pub cumulative_sq_error: T,
}

impl<T: Scalar> EstimatorState<T> {
    pub fn new(theta_hat: DVector<T>, set: HPolytope<T>, mu: T) -> Self {
        Self {
            theta_hat,
            set,
            mu,
            cumulative_sq_error: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions<T: Scalar> {
    /// Half-width of the band realizing each equality.
    pub slack: T,
    /// Updates leaving more facets than this after pruning are skipped.
    pub facet_cap: usize,
    /// Project the point estimate onto the current membership set instead
    /// of the prior set.
    pub project_onto_current: bool,
}

impl<T: Scalar> Default for EstimatorOptions<T> {
    fn default() -> Self {
        Self {
            slack: T::feas_tol(),
            facet_cap: 64,
            project_onto_current: false,
        }
    }
}

/// `safety / max |D(x, u)|^2` over the vertices of the constraint set.
pub fn compute_mu<T: Scalar>(
    sys: &AffineParamSystem<T>,
    zc: &ConstraintSet<T>,
    safety: T,
) -> Result<T, EstimatorError> {
    let s = regressor_bound(sys, zc)?;
    if s <= T::default_epsilon() {
        return Err(EstimatorError::DegenerateRegressor);
    }
    Ok(safety / s)
}

/// `max |D(x, u)|^2` over the constraint set.
pub fn regressor_bound<T: Scalar>(
    sys: &AffineParamSystem<T>,
    zc: &ConstraintSet<T>,
) -> Result<T, EstimatorError> {
    let n = sys.n();
    let m = sys.m();
    let mut s = T::zero();
    for v in zc.polytope().vertices()? {
        let x = v.rows(0, n).into_owned();
        let u = v.rows(n, m).into_owned();
        let nd = spectral_norm(&sys.regressor(&x, &u)?);
        s = s.max(nd * nd);
    }
    Ok(s)
}

/// `(D(x, u), x+ - A_0 x - B_0 u)`: the transition confines `theta` to
/// `D theta = d`.
pub fn delta_set<T: Scalar>(
    sys: &AffineParamSystem<T>,
    x_prev: &DVector<T>,
    u_prev: &DVector<T>,
    x_next: &DVector<T>,
) -> Result<(DMatrix<T>, DVector<T>), EstimatorError> {
    let dmat = sys.regressor(x_prev, u_prev)?;
    let d = x_next - sys.nominal_part(x_prev, u_prev);
    Ok((dmat, d))
}

/// Intersects the membership set with `|D theta - d| <= slack` and prunes.
pub fn update_membership<T: Scalar>(
    state: &EstimatorState<T>,
    dmat: &DMatrix<T>,
    d: &DVector<T>,
    opts: &EstimatorOptions<T>,
) -> Result<EstimatorState<T>, EstimatorError> {
    let rows = dmat.nrows();
    let p = dmat.ncols();
    let mut a = DMatrix::zeros(2 * rows, p);
    let mut b = DVector::zeros(2 * rows);
    for i in 0..rows {
        a.row_mut(2 * i).copy_from(&dmat.row(i));
        a.row_mut(2 * i + 1).copy_from(&(-dmat.row(i)));
        b[2 * i] = d[i] + opts.slack;
        b[2 * i + 1] = -d[i] + opts.slack;
    }
    let candidate = state.set.with_rows(&a, &b);
    let pruned = match candidate.prune() {
        Ok(p) => p,
        Err(GeometryError::EmptyPolytope) => return Err(EstimatorError::EmptyMembershipSet),
        Err(e) => return Err(e.into()),
    };
    let mut next = state.clone();
    if pruned.num_facets() <= opts.facet_cap {
        next.set = pruned;
    }
    Ok(next)
}

/// Euclidean projection onto a polytope via `min |theta - y|^2`.
pub fn project<T: Scalar>(
    y: &DVector<T>,
    set: &HPolytope<T>,
) -> Result<DVector<T>, EstimatorError> {
    if set.contains_point_tol(y, T::zero()) {
        return Ok(y.clone());
    }
    let p = y.len();
    let two = T::lit(2.0);
    let qp = QuadProgram::new(DMatrix::identity(p, p) * two, -y * two)
        .with_inequalities(set.a.clone(), set.b.clone());
    let sol = solve_qp(&qp)?;
    if !sol.is_optimal() {
        return Err(EstimatorError::Projection(format!("{:?}", sol.status)));
    }
    Ok(sol.x)
}

/// Gradient step on the one-step prediction error followed by projection.
/// Also accumulates the squared prediction error.
pub fn point_update<T: Scalar>(
    state: &EstimatorState<T>,
    sys: &AffineParamSystem<T>,
    x_prev: &DVector<T>,
    u_prev: &DVector<T>,
    x_next: &DVector<T>,
    theta0: &HPolytope<T>,
    opts: &EstimatorOptions<T>,
) -> Result<EstimatorState<T>, EstimatorError> {
    let predicted = sys.step(&state.theta_hat, x_prev, u_prev)?;
    let innovation = x_next - predicted;
    let dmat = sys.regressor(x_prev, u_prev)?;
    let raw = &state.theta_hat + dmat.transpose() * &innovation * state.mu;
    let target = if opts.project_onto_current {
        &state.set
    } else {
        theta0
    };
    let mut next = state.clone();
    next.theta_hat = project(&raw, target)?;
    next.cumulative_sq_error += innovation.norm_squared();
    Ok(next)
}

/// Full estimator step for one observed transition: membership update and
/// point update (the latter uses the previous estimate).
pub fn update<T: Scalar>(
    state: &EstimatorState<T>,
    sys: &AffineParamSystem<T>,
    x_prev: &DVector<T>,
    u_prev: &DVector<T>,
    x_next: &DVector<T>,
    theta0: &HPolytope<T>,
    opts: &EstimatorOptions<T>,
) -> Result<EstimatorState<T>, EstimatorError> {
    let pointed = point_update(state, sys, x_prev, u_prev, x_next, theta0, opts)?;
    let (dmat, d) = delta_set(sys, x_prev, u_prev, x_next)?;
    let mut next = update_membership(state, &dmat, &d, opts)?;
    next.theta_hat = pointed.theta_hat;
    next.cumulative_sq_error = pointed.cumulative_sq_error;
    Ok(next)
}

/// `x_true+ - x_hat+` for one step from the same `(x, u)`. Computed both
/// from the assembled matrices and from the regressor; the two must agree.
pub fn one_step_prediction_error<T: Scalar>(
    sys: &AffineParamSystem<T>,
    theta_hat: &DVector<T>,
    theta_true: &DVector<T>,
    x: &DVector<T>,
    u: &DVector<T>,
) -> Result<DVector<T>, EstimatorError> {
    let (at, bt) = sys.assemble(theta_true)?;
    let (ah, bh) = sys.assemble(theta_hat)?;
    let direct = (at - ah) * x + (bt - bh) * u;
    let via_regressor = sys.regressor(x, u)? * (theta_true - theta_hat);
    let scale = T::one() + direct.amax();
    assert!(
        (&direct - &via_regressor).amax() <= T::lit(1e3) * T::default_epsilon() * scale,
        "prediction error paths disagree"
    );
    Ok(direct)
}

/// `sum_{i<l} a^i`.
pub fn c1<T: Scalar>(l: usize, a_norm: T) -> T {
    if (a_norm - T::one()).abs() < T::lit(1e-9) {
        return T::from_usize(l).unwrap();
    }
    (T::one() - a_norm.powi(l as i32)) / (T::one() - a_norm)
}

/// `c1(l, |A(theta_hat)|)^2 |theta_err|^2 / mu`, bounding the squared
/// `l`-step prediction error along trajectories that stay in the
/// constraint set.
pub fn prediction_error_bound<T: Scalar>(
    sys: &AffineParamSystem<T>,
    theta_hat: &DVector<T>,
    l: usize,
    theta_err_norm: T,
    mu: T,
) -> Result<T, EstimatorError> {
    let (a, _) = sys.assemble(theta_hat)?;
    let c = c1(l, spectral_norm(&a));
    Ok(c * c * theta_err_norm * theta_err_norm / mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use nalgebra::{dmatrix, dvector};

    fn scalar_system() -> AffineParamSystem<f64> {
        // x+ = theta x, theta in [0, 1].
        let theta = HPolytope::from_box(&dvector![0.0], &dvector![1.0]);
        AffineParamSystem::new(
            vec![dmatrix![0.0], dmatrix![1.0]],
            vec![dmatrix![0.0], dmatrix![0.0]],
            theta,
        )
        .unwrap()
    }

    #[test]
    fn geometric_sum() {
        assert_eq!(c1(0, 0.3), 0.0);
        assert_eq!(c1(7, 1.0), 7.0);
        assert!((c1(2, 0.5f64) - 1.5).abs() < 1e-15);
        assert!((c1(3, 1.0f64 + 1e-12) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn one_step_hand_computation() {
        let sys = scalar_system();
        let theta0 = sys.theta.clone();
        let st = EstimatorState::new(dvector![0.0], theta0.clone(), 0.5);
        let x = dvector![1.0];
        let u = dvector![0.0];
        let x_next = sys.step(&dvector![0.5], &x, &u).unwrap();
        let next = point_update(&st, &sys, &x, &u, &x_next, &theta0, &Default::default()).unwrap();
        assert!((next.theta_hat[0] - 0.25).abs() < 1e-12);
        assert!((next.cumulative_sq_error - 0.25).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_leaves_estimate() {
        let sys = benchmark::system();
        let theta0 = sys.theta.clone();
        let ts = benchmark::theta_star();
        let st = EstimatorState::new(ts.clone(), theta0.clone(), 0.1);
        let x = benchmark::x0();
        let u = dvector![1.0];
        let xn = sys.step(&ts, &x, &u).unwrap();
        let next = point_update(&st, &sys, &x, &u, &xn, &theta0, &Default::default()).unwrap();
        assert!((next.theta_hat - ts).amax() < 1e-15);
    }

    #[test]
    fn projection_clamps_to_box() {
        let b = HPolytope::from_box(&dvector![0.0, 0.0], &dvector![1.0, 1.0]);
        let p = project(&dvector![2.0, -0.5], &b).unwrap();
        assert!((p - dvector![1.0, 0.0]).amax() < 1e-8);
    }

    #[test]
    fn membership_band_gives_segment() {
        let set = HPolytope::from_box(&dvector![0.0, 0.0], &dvector![1.0, 1.0]);
        let st = EstimatorState::new(dvector![0.5, 0.5], set, 1.0);
        let opts = EstimatorOptions::default();
        let next = update_membership(&st, &dmatrix![1.0, 1.0], &dvector![1.0], &opts).unwrap();
        assert_eq!(next.set.volume().unwrap(), 0.0);
        let v = next.set.vertices().unwrap();
        assert_eq!(v.len(), 2);
        assert!(st.set.contains(&next.set).unwrap());
        let again = update_membership(&next, &dmatrix![1.0, 1.0], &dvector![1.0], &opts).unwrap();
        assert!(again.set.set_eq(&next.set).unwrap());
        let zero = update_membership(&st, &DMatrix::zeros(1, 2), &dvector![0.0], &opts).unwrap();
        assert!(zero.set.set_eq(&st.set).unwrap());
    }

    #[test]
    fn inconsistent_data_empty_the_set() {
        let set = HPolytope::from_box(&dvector![0.0, 0.0], &dvector![1.0, 1.0]);
        let st = EstimatorState::new(dvector![0.5, 0.5], set, 1.0);
        let r = update_membership(
            &st,
            &dmatrix![1.0, 1.0],
            &dvector![3.0],
            &Default::default(),
        );
        assert_eq!(r, Err(EstimatorError::EmptyMembershipSet));
    }

    #[test]
    fn mu_for_identity_perturbation() {
        // x+ = theta x + u with D = x, Z the unit box in (x, u).
        let theta = HPolytope::from_box(&dvector![0.0], &dvector![1.0]);
        let sys = AffineParamSystem::new(
            vec![dmatrix![0.0], dmatrix![1.0]],
            vec![dmatrix![1.0], dmatrix![0.0]],
            theta,
        )
        .unwrap();
        let z = ConstraintSet::new(dmatrix![1.0; -1.0; 0.0; 0.0], dmatrix![0.0; 0.0; 1.0; -1.0])
            .unwrap();
        let mu: f64 = compute_mu(&sys, &z, 0.99).unwrap();
        assert!((mu - 0.99).abs() < 1e-9);
        let flat = AffineParamSystem::new(
            vec![dmatrix![0.5], dmatrix![0.0]],
            vec![dmatrix![1.0], dmatrix![0.0]],
            HPolytope::from_box(&dvector![0.0], &dvector![1.0]),
        )
        .unwrap();
        assert_eq!(
            compute_mu(&flat, &z, 0.99),
            Err(EstimatorError::DegenerateRegressor)
        );
    }

    #[test]
    fn prediction_error_identity() {
        let sys = benchmark::system();
        let e = one_step_prediction_error(
            &sys,
            &dvector![0.1, 0.2, 0.3],
            &benchmark::theta_star(),
            &benchmark::x0(),
            &dvector![2.0],
        )
        .unwrap();
        assert!(e.amax() > 0.0);
        let z = one_step_prediction_error(
            &sys,
            &benchmark::theta_star(),
            &benchmark::theta_star(),
            &benchmark::x0(),
            &dvector![2.0],
        )
        .unwrap();
        assert_eq!(z.amax(), 0.0);
        assert_eq!(
            prediction_error_bound(&sys, &benchmark::theta_star(), 0, 1.0, 0.1).unwrap(),
            0.0
        );
    }
}
