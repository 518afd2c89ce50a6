//! Closed-loop simulation against the true parameter.

use atmpc_core::estimator::{update, EstimatorState};
use atmpc_core::model::{SetSummary, TrajectoryLog};
use atmpc_core::perf_bound::terminal_constant;
use atmpc_core::tube_mpc::{check_tube, control_input, solve_ocp_at, TubeError};
use atmpc_core::{Decision, Polytope, Vector};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::Problem;
use crate::HarnessError;

/// Tolerances of the per-step checks.
pub const PRED_ERR_TOL: f64 = 1e-8;
pub const TUBE_TOL: f64 = 1e-6;
pub const CONSTRAINT_TOL: f64 = 1e-6;
pub const MEMBER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub t_max: usize,
    pub x_tol: f64,
    /// Compute membership-set volumes for the log.
    pub volumes: bool,
}

impl SimOptions {
    pub fn from_problem(p: &Problem) -> Self {
        Self {
            t_max: p.config.t_max,
            x_tol: p.config.x_tol,
            volumes: true,
        }
    }
}

/// Worst values seen by the running checks. Excesses are positive when a
/// check fails; counters count failing steps.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub steps: usize,
    pub pred_err_max_excess: f64,
    pub tube_max_excess: f64,
    pub realized_tube_max_excess: f64,
    pub constraint_max_violation: f64,
    pub terminal_cost_excess: f64,
    pub membership_not_nested: usize,
    pub truth_outside: usize,
    pub estimate_outside: usize,
}

impl Default for InvariantReport {
    fn default() -> Self {
        Self {
            steps: 0,
            pred_err_max_excess: f64::NEG_INFINITY,
            tube_max_excess: f64::NEG_INFINITY,
            realized_tube_max_excess: f64::NEG_INFINITY,
            constraint_max_violation: f64::NEG_INFINITY,
            terminal_cost_excess: f64::NEG_INFINITY,
            membership_not_nested: 0,
            truth_outside: 0,
            estimate_outside: 0,
        }
    }
}

impl InvariantReport {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.pred_err_max_excess > PRED_ERR_TOL {
            out.push(format!(
                "prediction error sum exceeds its bound by {:e}",
                self.pred_err_max_excess
            ));
        }
        if self.tube_max_excess > TUBE_TOL {
            out.push(format!("tube re-check fails by {:e}", self.tube_max_excess));
        }
        if self.realized_tube_max_excess > TUBE_TOL {
            out.push(format!(
                "realized state leaves its tube by {:e}",
                self.realized_tube_max_excess
            ));
        }
        if self.constraint_max_violation > CONSTRAINT_TOL {
            out.push(format!(
                "constraints violated by {:e}",
                self.constraint_max_violation
            ));
        }
        if self.terminal_cost_excess > TUBE_TOL {
            out.push(format!(
                "terminal cost exceeds c_f by {:e}",
                self.terminal_cost_excess
            ));
        }
        for (count, what) in [
            (self.membership_not_nested, "membership set grew"),
            (self.truth_outside, "true parameter left the membership set"),
            (self.estimate_outside, "point estimate left the prior set"),
        ] {
            if count > 0 {
                out.push(format!("{what} at {count} steps"));
            }
        }
        out
    }

    pub fn is_clean(&self) -> bool {
        self.violations().is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub log: TrajectoryLog<f64>,
    pub converged: bool,
    /// `x_T' P x_T` at the last state.
    pub tail: f64,
    /// Stage cost sum plus tail.
    pub cost: f64,
    pub invariants: InvariantReport,
    pub theta_err0: f64,
    /// `|theta_err_0|^2 / mu`.
    pub pred_err_bound: f64,
    pub first_decision: Decision,
}

fn summarize(set: &Polytope, verts: &[Vector], volumes: bool) -> SetSummary<f64> {
    let hull_dim = if verts.len() < 2 {
        0
    } else {
        let base = &verts[0];
        let d = DMatrix::from_columns(&verts[1..].iter().map(|v| v - base).collect::<Vec<_>>());
        d.rank(1e-7)
    };
    let volume = if volumes {
        set.volume().unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    SetSummary {
        facets: set.num_facets(),
        vertices: verts.len(),
        hull_dim,
        volume,
    }
}

/// Runs the adaptive controller from `x0` with prior set `theta0` and
/// initial estimate `theta_hat0` on the true system.
pub fn simulate_closed_loop(
    p: &Problem,
    theta0: &Polytope,
    theta_hat0: &Vector,
    x0: &Vector,
    opts: &SimOptions,
) -> Result<SimResult, HarnessError> {
    let sys = &p.sys;
    let c_f = terminal_constant(&p.tube)?;
    let theta_err0 = (&p.theta_star - theta_hat0).norm();
    let pred_err_bound = theta_err0 * theta_err0 / p.mu;

    let mut state = EstimatorState::new(theta_hat0.clone(), theta0.clone(), p.mu);
    let mut x = x0.clone();
    let mut log = TrajectoryLog::default();
    log.states.push(x.clone());
    let mut inv = InvariantReport::default();
    let mut first = None;
    let mut converged = false;

    for k in 0..opts.t_max {
        if x.norm() < opts.x_tol {
            converged = true;
            break;
        }
        let verts = state.set.vertices()?;
        let dec = match solve_ocp_at(sys, &p.zc, &p.cost, &p.tube, &x, &state.theta_hat, &verts) {
            Ok(d) => d,
            Err(TubeError::OcpInfeasible) if k == 0 => {
                return Err(HarnessError::InitiallyInfeasible)
            }
            Err(TubeError::OcpInfeasible) => {
                return Err(HarnessError::RecursiveFeasibilityViolated(k))
            }
            Err(e) => return Err(e.into()),
        };
        let check = check_tube(sys, &p.zc, &p.tube, &dec, &verts, &x)?;
        inv.tube_max_excess = inv.tube_max_excess.max(check.max());
        let xn_hat = &dec.nominal[dec.v.len()];
        inv.terminal_cost_excess = inv
            .terminal_cost_excess
            .max((&p.tube.p * xn_hat).dot(xn_hat) - c_f);

        let u = control_input(&p.tube, &dec, &x);
        inv.constraint_max_violation = inv.constraint_max_violation.max(p.zc.violation(&x, &u));
        let x_next = sys.step(&p.theta_star, &x, &u)?;
        inv.realized_tube_max_excess =
            inv.realized_tube_max_excess
                .max(p.tube.tube_excess(&x_next, &dec.z[1], dec.alpha[1]));

        let next = update(&state, sys, &x, &u, &x_next, theta0, &p.est_opts)?;
        inv.pred_err_max_excess = inv
            .pred_err_max_excess
            .max(next.cumulative_sq_error - pred_err_bound);
        if !state.set.contains(&next.set)? {
            inv.membership_not_nested += 1;
        }
        if next.set.violation(&p.theta_star) > MEMBER_TOL {
            inv.truth_outside += 1;
        }
        if theta0.violation(&next.theta_hat) > MEMBER_TOL {
            inv.estimate_outside += 1;
        }
        inv.steps += 1;

        log.inputs.push(u.clone());
        log.stage_costs.push(p.cost.stage_cost(&x, &u));
        log.estimates.push(state.theta_hat.clone());
        log.membership_sets
            .push(summarize(&state.set, &verts, opts.volumes));
        log.values.push(dec.value);
        log.states.push(x_next.clone());
        if first.is_none() {
            first = Some(dec);
        }
        state = next;
        x = x_next;
    }
    if !converged && x.norm() < opts.x_tol {
        converged = true;
    }
    let first_decision = match first {
        Some(d) => d,
        // Started inside the tolerance ball: report the program at x0.
        None => solve_ocp_at(
            sys,
            &p.zc,
            &p.cost,
            &p.tube,
            x0,
            theta_hat0,
            &theta0.vertices()?,
        )
        .map_err(|e| match e {
            TubeError::OcpInfeasible => HarnessError::InitiallyInfeasible,
            e => e.into(),
        })?,
    };
    let tail = (&p.tube.p * &x).dot(&x);
    let cost = log.total_cost() + tail;
    Ok(SimResult {
        log,
        converged,
        tail,
        cost,
        invariants: inv,
        theta_err0,
        pred_err_bound,
        first_decision,
    })
}

/// Simulation of the configured instance.
pub fn simulate(p: &Problem) -> Result<SimResult, HarnessError> {
    simulate_closed_loop(
        p,
        &p.theta0,
        &p.theta_hat0,
        &p.x0,
        &SimOptions::from_problem(p),
    )
}
