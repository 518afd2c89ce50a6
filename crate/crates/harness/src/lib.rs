//! Experiment harness for the adaptive tube MPC: configuration, closed-loop
//! simulation with invariant checks, infinite-horizon value oracles,
//! parameter sweeps and report emission. The `atmpc` binary wraps these.

pub mod bounds;
pub mod config;
pub mod oracle;
pub mod output;
pub mod report;
pub mod sim;
pub mod sweep;

use atmpc_core::certify::CertifyError;
use atmpc_core::estimator::EstimatorError;
use atmpc_core::geometry::GeometryError;
use atmpc_core::model::ModelError;
use atmpc_core::perf_bound::BoundError;
use atmpc_core::tube_mpc::TubeError;
use thiserror::Error;

pub use config::{Problem, RunConfig};
pub use sim::{simulate, simulate_closed_loop, SimOptions, SimResult};
pub use sweep::{SweepKind, SweepSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("tube program infeasible at the initial state")]
    InitiallyInfeasible,
    #[error("tube program became infeasible at step {0} after a feasible start")]
    RecursiveFeasibilityViolated(usize),
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    #[error("Riccati iteration did not converge")]
    RiccatiDiverged,
    #[error(transparent)]
    Tube(#[from] TubeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl HarnessError {
    /// 1 configuration, 2 infeasibility, 3 violated invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::InitiallyInfeasible | Self::Tube(TubeError::OcpInfeasible) => 2,
            Self::RecursiveFeasibilityViolated(_)
            | Self::InvariantViolated(_)
            | Self::Estimator(EstimatorError::EmptyMembershipSet) => 3,
            _ => 1,
        }
    }
}
