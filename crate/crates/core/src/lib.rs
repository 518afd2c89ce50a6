//! Adaptive homothetic-tube MPC for linear systems whose matrices depend
//! affinely on an unknown constant parameter.
//!
//! The parameter is tracked by a set-membership estimator (a shrinking
//! polytope that always contains the truth) and a projected-gradient point
//! estimate. The controller solves a tube program robust over the current
//! membership set and prices the cost along the point-estimate prediction.
//! [`perf_bound`] turns the design constants into an a priori bound on the
//! infinite-horizon closed-loop cost.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`.

pub mod benchmark;
pub mod certify;
pub mod estimator;
pub mod geometry;
pub mod model;
pub mod perf_bound;
pub mod qp;
pub mod scalar;
pub mod tube_mpc;

pub use scalar::Scalar;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type Polytope = geometry::HPolytope<f64>;
pub type System = model::AffineParamSystem<f64>;
pub type Constraints = model::ConstraintSet<f64>;
pub type Weights = model::StageCost<f64>;
pub type Estimator = estimator::EstimatorState<f64>;
pub type Tube = tube_mpc::TubeConfig<f64>;
pub type Decision = tube_mpc::TubeDecision<f64>;
pub type Program = qp::QuadProgram<f64>;
pub type Report = perf_bound::BoundReport<f64>;
