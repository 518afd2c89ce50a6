//! Bounds on the optimal infinite-horizon cost under the true parameter.

use atmpc_core::geometry::HPolytope;
use atmpc_core::{Matrix, Vector};

use crate::config::Problem;
use crate::sim::{simulate_closed_loop, SimOptions};
use crate::HarnessError;

/// Half-width of the box standing in for the singleton `{theta*}`.
pub const SINGLETON_HALF_WIDTH: f64 = 0.5e-9;

/// One Riccati step `Q + A'PA - A'PB (R + B'PB)^-1 B'PA`.
pub fn riccati_step(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Option<Matrix> {
    let bp = b.transpose() * p;
    let s = r + &bp * b;
    let gain = s.cholesky()?.solve(&(&bp * a));
    let next = q + a.transpose() * p * a - a.transpose() * p * b * gain;
    Some((&next + next.transpose()) * 0.5)
}

/// Cost-to-go matrix of the `n`-step problem with terminal weight `p_f`.
pub fn finite_horizon_riccati(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    p_f: &Matrix,
    n: usize,
) -> Result<Matrix, HarnessError> {
    let mut p = p_f.clone();
    for _ in 0..n {
        p = riccati_step(a, b, q, r, &p).ok_or(HarnessError::RiccatiDiverged)?;
    }
    Ok(p)
}

/// Stabilizing DARE solution by value iteration from `Q` until the update
/// falls below `1e-12` relative.
pub fn dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix, HarnessError> {
    let mut p = q.clone();
    for _ in 0..100_000 {
        let next = riccati_step(a, b, q, r, &p).ok_or(HarnessError::RiccatiDiverged)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(HarnessError::RiccatiDiverged);
        }
        let delta = (&next - &p).amax();
        p = next;
        if delta <= 1e-12 * (1.0 + p.amax()) {
            return Ok(p);
        }
    }
    Err(HarnessError::RiccatiDiverged)
}

/// `{theta*}` as a tiny box.
pub fn singleton(theta: &Vector) -> HPolytope<f64> {
    let h = Vector::from_element(theta.len(), SINGLETON_HALF_WIDTH);
    HPolytope::from_box(&(theta - &h), &(theta + &h))
}

/// Closed-loop cost of certainty-equivalence control with the true
/// parameter known exactly: the cost of one admissible policy, hence an
/// upper bound on the optimal infinite-horizon cost.
pub fn v_infinity_upper(p: &Problem, x0: &Vector) -> Result<f64, HarnessError> {
    if x0.norm() == 0.0 {
        return Ok(0.0);
    }
    let set = singleton(&p.theta_star);
    let mut opts = SimOptions::from_problem(p);
    opts.volumes = false;
    Ok(simulate_closed_loop(p, &set, &p.theta_star, x0, &opts)?.cost)
}

/// `x0' P_dare x0` for the true parameter: the unconstrained optimum, hence
/// a lower bound.
pub fn v_infinity_lower(p: &Problem, x0: &Vector) -> Result<f64, HarnessError> {
    let (a, b) = p.sys.assemble(&p.theta_star)?;
    let pd = dare(&a, &b, &p.cost.q, &p.cost.r)?;
    Ok((&pd * x0).dot(x0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_dare_matches_closed_form() {
        // p = 1 + a^2 p - a^2 p^2 / (1 + p)  =>  p^2 - a^2 p - 1 = 0 with a = 0.5.
        let p = dare(
            &dmatrix![0.5],
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
        )
        .unwrap();
        let expected = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert!((p[(0, 0)] - expected).abs() < 1e-10);
    }

    #[test]
    fn one_step_horizon() {
        let p = finite_horizon_riccati(
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            1,
        )
        .unwrap();
        // 1 + 1 - 1/2.
        assert!((p[(0, 0)] - 1.5).abs() < 1e-14);
    }
}
