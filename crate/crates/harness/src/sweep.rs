//! Seeded parameter sweeps over the prior-set volume and the initial
//! estimation error.
//!
//! Run `j` of level `i` uses the RNG seed `seed ^ (i << 32) ^ j`, so every
//! run is reproducible in isolation and runs may execute in any order.

use atmpc_core::estimator::project;
use atmpc_core::perf_bound::sphere_directions;
use atmpc_core::{Polytope, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Problem;
use crate::sim::{simulate_closed_loop, InvariantReport, SimOptions};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    ThetaSetVolume,
    ThetaErrorNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub levels: Vec<f64>,
    pub samples_per_level: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SweepSpec {
    pub fn from_path(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let spec: Self =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.samples_per_level == 0 {
            return Err(HarnessError::Config(
                "samples_per_level must be at least 1".into(),
            ));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(HarnessError::Config(
                "levels must be nonempty and ascending".into(),
            ));
        }
        if self.levels.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(HarnessError::Config(
                "levels must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

pub fn run_seed(seed: u64, level: usize, sample: usize) -> u64 {
    seed ^ ((level as u64) << 32) ^ sample as u64
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub level_index: usize,
    pub level: f64,
    pub sample: usize,
    pub theta_hat0: Vec<f64>,
    pub theta_err_norm: f64,
    /// `NaN` when the run failed.
    pub cost: f64,
    pub converged: bool,
    pub steps: usize,
    /// `"ok"` or the error message.
    pub status: String,
    pub recursive_feasibility_violated: bool,
    pub violations: Vec<String>,
    /// Present when the run completed.
    pub invariants: Option<InvariantReport>,
    #[serde(skip)]
    pub trajectory: Vec<Vector>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// The prior set used at each level.
    #[serde(skip)]
    pub sets: Vec<Polytope>,
    pub records: Vec<RunRecord>,
}

impl SweepResult {
    pub fn level_records(&self, i: usize) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(move |r| r.level_index == i)
    }

    pub fn median_cost(&self, i: usize) -> f64 {
        let mut c: Vec<f64> = self
            .level_records(i)
            .map(|r| r.cost)
            .filter(|c| c.is_finite())
            .collect();
        if c.is_empty() {
            return f64::NAN;
        }
        c.sort_by(f64::total_cmp);
        let n = c.len();
        if n % 2 == 1 {
            c[n / 2]
        } else {
            0.5 * (c[n / 2 - 1] + c[n / 2])
        }
    }

    pub fn worst_cost(&self, i: usize) -> f64 {
        self.level_records(i)
            .map(|r| r.cost)
            .fold(f64::NAN, f64::max)
    }
}

/// `theta* + s (theta0 - theta*)` with `s^p vol(theta0) = volume`, capped
/// at `s = 1`. Contains `theta*` and stays inside the prior set.
pub fn volume_set(p: &Problem, volume: f64) -> Result<Polytope, HarnessError> {
    let full = p.theta0.volume()?;
    let dim = p.theta0.dim() as f64;
    let s = (volume / full).powf(1.0 / dim).min(1.0);
    let a = p.theta0.a.clone();
    let b = &p.theta0.b * s + (&a * &p.theta_star) * (1.0 - s);
    Ok(Polytope { a, b })
}

/// Uniform sample by per-coordinate uniforms over the bounding box, with
/// rejection for sets that are not boxes.
fn sample_uniform(set: &Polytope, rng: &mut ChaCha8Rng) -> Result<Vector, HarnessError> {
    let d = set.dim();
    let mut lo = Vector::zeros(d);
    let mut hi = Vector::zeros(d);
    for i in 0..d {
        let e = Vector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 });
        hi[i] = set.support(&e)?;
        lo[i] = -set.support(&-e)?;
    }
    for _ in 0..100_000 {
        let x = Vector::from_fn(d, |i, _| {
            if hi[i] > lo[i] {
                rng.gen_range(lo[i]..=hi[i])
            } else {
                lo[i]
            }
        });
        if set.contains_point_tol(&x, 1e-12) {
            return Ok(x);
        }
    }
    Err(HarnessError::Config(
        "rejection sampling of the prior set failed".into(),
    ))
}

struct Job {
    level_index: usize,
    level: f64,
    sample: usize,
    set: Polytope,
    theta_hat0: Vector,
}

fn run(p: &Problem, job: Job) -> RunRecord {
    let mut opts = SimOptions::from_problem(p);
    opts.volumes = false;
    let res = simulate_closed_loop(p, &job.set, &job.theta_hat0, &p.x0, &opts);
    let mut rec = RunRecord {
        level_index: job.level_index,
        level: job.level,
        sample: job.sample,
        theta_err_norm: (&p.theta_star - &job.theta_hat0).norm(),
        theta_hat0: job.theta_hat0.iter().copied().collect(),
        cost: f64::NAN,
        converged: false,
        steps: 0,
        status: "ok".into(),
        recursive_feasibility_violated: false,
        violations: Vec::new(),
        invariants: None,
        trajectory: Vec::new(),
    };
    match res {
        Ok(r) => {
            rec.cost = r.cost;
            rec.converged = r.converged;
            rec.steps = r.log.inputs.len();
            rec.violations = r.invariants.violations();
            rec.invariants = Some(r.invariants);
            rec.trajectory = r.log.states;
        }
        Err(e) => {
            rec.recursive_feasibility_violated =
                matches!(e, HarnessError::RecursiveFeasibilityViolated(_));
            rec.status = e.to_string();
        }
    }
    rec
}

fn execute(p: &Problem, spec: &SweepSpec, sets: Vec<Polytope>, jobs: Vec<Job>) -> SweepResult {
    let records = jobs.into_par_iter().map(|j| run(p, j)).collect();
    SweepResult {
        spec: spec.clone(),
        sets,
        records,
    }
}

/// Shrinks the prior set toward `theta*` to each volume level and draws
/// uniform initial estimates from it.
pub fn sweep_theta_set(p: &Problem, spec: &SweepSpec) -> Result<SweepResult, HarnessError> {
    spec.validate()?;
    let mut sets = Vec::new();
    let mut jobs = Vec::new();
    for (i, &level) in spec.levels.iter().enumerate() {
        let set = volume_set(p, level)?;
        for j in 0..spec.samples_per_level {
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(spec.seed, i, j));
            jobs.push(Job {
                level_index: i,
                level,
                sample: j,
                theta_hat0: sample_uniform(&set, &mut rng)?,
                set: set.clone(),
            });
        }
        sets.push(set);
    }
    Ok(execute(p, spec, sets, jobs))
}

/// For each error norm, runs the direction of `theta*` (sample 0) and
/// random directions, with `theta_hat0 = proj(theta* - err)` onto the prior
/// set. Level 0 is a single run.
pub fn sweep_theta_error(p: &Problem, spec: &SweepSpec) -> Result<SweepResult, HarnessError> {
    spec.validate()?;
    let dim = p.theta_star.len();
    let star_dir = if p.theta_star.norm() > 0.0 {
        p.theta_star.normalize()
    } else {
        Vector::from_fn(dim, |i, _| if i == 0 { 1.0 } else { 0.0 })
    };
    let mut jobs = Vec::new();
    for (i, &level) in spec.levels.iter().enumerate() {
        let count = if level == 0.0 {
            1
        } else {
            spec.samples_per_level
        };
        for j in 0..count {
            let dir = if j == 0 {
                star_dir.clone()
            } else {
                sphere_directions::<f64>(dim, 1, run_seed(spec.seed, i, j)).remove(0)
            };
            let raw = &p.theta_star - dir * level;
            jobs.push(Job {
                level_index: i,
                level,
                sample: j,
                theta_hat0: project(&raw, &p.theta0)?,
                set: p.theta0.clone(),
            });
        }
    }
    let sets = vec![p.theta0.clone(); spec.levels.len()];
    Ok(execute(p, spec, sets, jobs))
}
