//! JSON run configuration and its validated, assembled form.
//!
//! Matrices are row-major nested arrays. Sets are either a box
//! `{"lower": [..], "upper": [..]}` or an H-representation
//! `{"a": [[..]], "b": [..]}`.

use std::fs;
use std::path::Path;

use atmpc_core::estimator::{compute_mu, EstimatorOptions};
use atmpc_core::geometry::HPolytope;
use atmpc_core::model::{AffineParamSystem, ConstraintSet, StageCost};
use atmpc_core::tube_mpc::{synth_cross_section, synth_terminal_set, TubeConfig};
use atmpc_core::{Constraints, Matrix, Polytope, System, Tube, Vector, Weights};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    HRep { a: Rows, b: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// `A_0, A_1, .., A_p`.
    pub a: Vec<Rows>,
    /// `B_0, B_1, .., B_p`.
    pub b: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub f: Rows,
    pub g: Rows,
}

fn default_mu_safety() -> f64 {
    0.99
}
fn default_t_max() -> usize {
    200
}
fn default_x_tol() -> f64 {
    1e-6
}
fn default_lambda_weight() -> f64 {
    1.0
}
fn default_lambda_target() -> f64 {
    0.9
}
fn default_c_theta_samples() -> usize {
    16
}
fn default_mu_exponent() -> i32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub theta0: SetSpec,
    pub theta_star: Vec<f64>,
    pub theta_hat0: Vec<f64>,
    pub x0: Vec<f64>,
    pub constraints: ConstraintSpec,
    pub horizon: usize,
    pub q: Rows,
    pub r: Rows,
    pub k: Rows,
    pub p: Rows,
    /// Tube cross-section; synthesized when absent.
    #[serde(default)]
    pub cross_section: Option<SetSpec>,
    /// Terminal set over `(z, alpha)`; synthesized when absent.
    #[serde(default)]
    pub terminal_set: Option<SetSpec>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_mu_safety")]
    pub mu_safety: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_x_tol")]
    pub x_tol: f64,
    #[serde(default)]
    pub epsilons: Option<[f64; 3]>,
    #[serde(default = "default_lambda_weight")]
    pub lambda_weight: f64,
    #[serde(default = "default_lambda_target")]
    pub lambda_target: f64,
    #[serde(default)]
    pub c_theta_override: Option<f64>,
    #[serde(default = "default_c_theta_samples")]
    pub c_theta_samples: usize,
    #[serde(default = "default_mu_exponent")]
    pub dtheta_mu_exponent: i32,
    #[serde(default)]
    pub project_onto_current: bool,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// The benchmark instance with every optional field left to synthesis.
    pub fn benchmark() -> Self {
        use atmpc_core::benchmark as bm;
        let sys = bm::system();
        let zc = bm::constraints();
        let w = bm::weights();
        Self {
            system: SystemSpec {
                a: sys.a.iter().map(rows).collect(),
                b: sys.b.iter().map(rows).collect(),
            },
            theta0: SetSpec::Box {
                lower: vec![0.0; 3],
                upper: vec![0.75; 3],
            },
            theta_star: bm::theta_star().iter().copied().collect(),
            theta_hat0: bm::theta_star().iter().copied().collect(),
            x0: bm::x0().iter().copied().collect(),
            constraints: ConstraintSpec {
                f: rows(&zc.f),
                g: rows(&zc.g),
            },
            horizon: bm::HORIZON,
            q: rows(&w.q),
            r: rows(&w.r),
            k: rows(&bm::gain()),
            p: rows(&bm::terminal_weight()),
            cross_section: None,
            terminal_set: None,
            mu: None,
            mu_safety: default_mu_safety(),
            seed: 0,
            t_max: default_t_max(),
            x_tol: default_x_tol(),
            epsilons: None,
            lambda_weight: default_lambda_weight(),
            lambda_target: default_lambda_target(),
            c_theta_override: None,
            c_theta_samples: default_c_theta_samples(),
            dtheta_mu_exponent: default_mu_exponent(),
            project_onto_current: false,
        }
    }
}

pub fn rows(m: &Matrix) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn matrix(name: &str, r: &Rows) -> Result<Matrix, HarnessError> {
    let nr = r.len();
    let nc = r.first().map_or(0, Vec::len);
    if r.iter().any(|row| row.len() != nc) {
        return Err(HarnessError::Config(format!("{name}: ragged rows")));
    }
    if r.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HarnessError::Config(format!("{name}: non-finite entry")));
    }
    Ok(Matrix::from_row_iterator(
        nr,
        nc,
        r.iter().flatten().copied(),
    ))
}

fn vector(name: &str, v: &[f64], len: usize) -> Result<Vector, HarnessError> {
    if v.len() != len {
        return Err(HarnessError::Config(format!(
            "{name}: length {}, expected {len}",
            v.len()
        )));
    }
    Ok(Vector::from_column_slice(v))
}

pub fn polytope(name: &str, s: &SetSpec) -> Result<Polytope, HarnessError> {
    match s {
        SetSpec::Box { lower, upper } => {
            if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| l > u) {
                return Err(HarnessError::Config(format!("{name}: invalid box bounds")));
            }
            Ok(HPolytope::from_box(
                &Vector::from_column_slice(lower),
                &Vector::from_column_slice(upper),
            ))
        }
        SetSpec::HRep { a, b } => {
            let a = matrix(name, a)?;
            HPolytope::new(a, Vector::from_column_slice(b))
                .map_err(|e| HarnessError::Config(format!("{name}: {e}")))
        }
    }
}

/// A validated configuration with every core object assembled.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: RunConfig,
    pub sys: System,
    pub zc: Constraints,
    pub cost: Weights,
    pub theta0: Polytope,
    pub theta_star: Vector,
    pub theta_hat0: Vector,
    pub x0: Vector,
    pub tube: Tube,
    pub mu: f64,
    /// Contraction factor of the cross-section, when it was synthesized.
    pub lambda: Option<f64>,
    pub est_opts: EstimatorOptions<f64>,
}

const MEMBER_TOL: f64 = 1e-9;

impl Problem {
    pub fn new(config: RunConfig) -> Result<Self, HarnessError> {
        let cfg_err =
            |what: &str, e: &dyn std::fmt::Display| HarnessError::Config(format!("{what}: {e}"));
        let theta0 = polytope("theta0", &config.theta0)?;
        let a = config
            .system
            .a
            .iter()
            .enumerate()
            .map(|(i, m)| matrix(&format!("system.a[{i}]"), m))
            .collect::<Result<Vec<_>, _>>()?;
        let b = config
            .system
            .b
            .iter()
            .enumerate()
            .map(|(i, m)| matrix(&format!("system.b[{i}]"), m))
            .collect::<Result<Vec<_>, _>>()?;
        let sys =
            AffineParamSystem::new(a, b, theta0.clone()).map_err(|e| cfg_err("system", &e))?;
        let (n, m, p) = (sys.n(), sys.m(), sys.p());
        let zc = ConstraintSet::new(
            matrix("constraints.f", &config.constraints.f)?,
            matrix("constraints.g", &config.constraints.g)?,
        )
        .map_err(|e| cfg_err("constraints", &e))?;
        if zc.f.ncols() != n || zc.g.ncols() != m {
            return Err(HarnessError::Config(format!(
                "constraints: F has {} columns and G has {}, expected {n} and {m}",
                zc.f.ncols(),
                zc.g.ncols()
            )));
        }
        let cost = StageCost::new(matrix("q", &config.q)?, matrix("r", &config.r)?)
            .map_err(|e| cfg_err("weights", &e))?;
        if cost.q.shape() != (n, n) || cost.r.shape() != (m, m) {
            return Err(HarnessError::Config("q or r has the wrong shape".into()));
        }
        let k = matrix("k", &config.k)?;
        let pm = matrix("p", &config.p)?;
        if k.shape() != (m, n) || pm.shape() != (n, n) {
            return Err(HarnessError::Config("k or p has the wrong shape".into()));
        }
        if (&pm - pm.transpose()).amax() > 1e-12 * (1.0 + pm.amax())
            || pm.clone().symmetric_eigenvalues().min() <= 0.0
        {
            return Err(HarnessError::Config(
                "p must be symmetric positive definite".into(),
            ));
        }
        if config.horizon == 0 || config.t_max == 0 || !(config.x_tol > 0.0) {
            return Err(HarnessError::Config(
                "horizon, t_max and x_tol must be positive".into(),
            ));
        }
        if !(config.lambda_target > 0.0 && config.lambda_target < 1.0) {
            return Err(HarnessError::Config(
                "lambda_target must lie in (0, 1)".into(),
            ));
        }
        if !(config.lambda_weight > 0.0) {
            return Err(HarnessError::Config(
                "lambda_weight must be positive".into(),
            ));
        }
        let theta_star = vector("theta_star", &config.theta_star, p)?;
        let theta_hat0 = vector("theta_hat0", &config.theta_hat0, p)?;
        let x0 = vector("x0", &config.x0, n)?;
        for (name, th) in [("theta_star", &theta_star), ("theta_hat0", &theta_hat0)] {
            if !theta0.contains_point_tol(th, MEMBER_TOL) {
                return Err(HarnessError::Config(format!("{name} lies outside theta0")));
            }
        }

        let (x0_set, lambda) = match &config.cross_section {
            Some(s) => (polytope("cross_section", s)?, None),
            None => {
                let seed = HPolytope::cube(n, 1.0);
                let (set, lam) = synth_cross_section(&sys, &k, config.lambda_target, 100, &seed)?;
                (set, Some(lam))
            }
        };
        let xf = match &config.terminal_set {
            Some(s) => polytope("terminal_set", s)?,
            None => synth_terminal_set(&sys, &zc, &k, &x0_set, 200)?,
        };
        let tube = TubeConfig::new(config.horizon, k, pm, &x0_set, xf)?;

        let mu = match config.mu {
            Some(mu) if mu > 0.0 => mu,
            Some(mu) => return Err(HarnessError::Config(format!("mu = {mu} must be positive"))),
            None => compute_mu(&sys, &zc, config.mu_safety)?,
        };
        let est_opts = EstimatorOptions {
            project_onto_current: config.project_onto_current,
            ..EstimatorOptions::default()
        };
        Ok(Self {
            config,
            sys,
            zc,
            cost,
            theta0,
            theta_star,
            theta_hat0,
            x0,
            tube,
            mu,
            lambda,
            est_opts,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        Self::new(RunConfig::from_path(path)?)
    }

    /// Same problem with the constraint set scaled by `s`, the tube
    /// ingredients resynthesized and `mu` recomputed unless pinned.
    pub fn inflated(&self, s: f64) -> Result<Self, HarnessError> {
        let mut cfg = self.config.clone();
        cfg.constraints.f = rows(&(&self.zc.f / s));
        cfg.constraints.g = rows(&(&self.zc.g / s));
        cfg.terminal_set = None;
        Self::new(cfg)
    }

    pub fn k(&self) -> &Matrix {
        &self.tube.k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_round_trips_through_json() {
        let cfg = RunConfig::benchmark();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn shape_errors_are_config_errors() {
        let mut cfg = RunConfig::benchmark();
        cfg.x0 = vec![1.0];
        assert!(matches!(Problem::new(cfg), Err(HarnessError::Config(_))));
        let mut cfg = RunConfig::benchmark();
        cfg.theta_star = vec![0.9, 0.5, 0.5];
        assert!(matches!(Problem::new(cfg), Err(HarnessError::Config(_))));
        assert!(matches!(
            RunConfig::from_json("{\"horizon\": 3}"),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(matrix("m", &vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        let m = matrix("m", &vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m[(1, 0)], 3.0);
    }
}
