//! Assembles the performance bound for a configured problem.

use atmpc_core::perf_bound::{
    estimate_c_theta, optimize_epsilons, thm1_bound, BoundConstants, BoundReport,
};

use crate::config::Problem;
use crate::HarnessError;

/// Bound constants over the prior set. `c_theta` comes from the config
/// override or from ray sampling at the initial estimate.
pub fn constants(p: &Problem) -> Result<BoundConstants<f64>, HarnessError> {
    let c_theta = match p.config.c_theta_override {
        Some(c) if c > 0.0 => c,
        Some(c) => {
            return Err(HarnessError::Config(format!(
                "c_theta_override = {c} must be positive"
            )))
        }
        None => estimate_c_theta(
            &p.sys,
            &p.zc,
            &p.cost,
            &p.tube,
            &p.theta_hat0,
            &p.theta0,
            p.config.c_theta_samples,
            p.config.seed,
        )?,
    };
    Ok(BoundConstants::new(
        &p.sys,
        &p.zc,
        &p.cost,
        &p.tube,
        &p.theta0,
        None,
        p.mu,
        c_theta,
        p.config.dtheta_mu_exponent,
    )?)
}

/// The epsilons from the config, or the heuristic optimum for this
/// parameter error.
pub fn epsilons(
    p: &Problem,
    k: &BoundConstants<f64>,
    theta_err_norm: f64,
) -> Result<[f64; 3], HarnessError> {
    match p.config.epsilons {
        Some(e) => Ok(e),
        None => Ok(optimize_epsilons(
            k,
            p.config.lambda_weight,
            theta_err_norm,
        )?),
    }
}

pub fn report(
    p: &Problem,
    k: &BoundConstants<f64>,
    theta_err_norm: f64,
) -> Result<BoundReport<f64>, HarnessError> {
    let [e1, e2, e3] = epsilons(p, k, theta_err_norm)?;
    Ok(thm1_bound(k, e1, e2, e3, theta_err_norm)?)
}
