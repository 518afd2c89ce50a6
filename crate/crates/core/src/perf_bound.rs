//! A priori bound on the infinite-horizon closed-loop cost.
//!
//! The bound has the form
//! `J <= alpha_V V_inf(x0) + alpha_f + alpha_Delta + a(|theta_err_0|, mu)`
//! where every coefficient is assembled from norms of the model, the
//! terminal ingredients and three free scalars `eps1, eps2, eps3 > 0`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::estimator::c1;
use crate::geometry::{max_norm_over_vertices, spectral_norm, GeometryError, HPolytope};
use crate::model::{min_eig, AffineParamSystem, ConstraintSet, ModelError, StageCost};
use crate::tube_mpc::{max_feasible_scale, solve_ocp_at, TubeConfig, TubeError};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("gamma = {0} is not positive")]
    GammaNonpositive(f64),
    #[error("gamma is nonpositive on the whole epsilon grid")]
    NoFeasiblePoint,
    #[error("no feasible state found along the sampled rays")]
    NoFeasibleSamples,
    #[error("mu exponent must be 1 or 2, got {0}")]
    InvalidExponent(i32),
    #[error(transparent)]
    Tube(#[from] TubeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `(1 - c^(l+1)) / (1 - c) - 1`, or `l` when `c = 1`.
pub fn c2<T: Scalar>(l: usize, c_cl: T) -> T {
    if (c_cl - T::one()).abs() < T::lit(1e-9) {
        return T::from_usize(l).unwrap();
    }
    (T::one() - c_cl.powi(l as i32 + 1)) / (T::one() - c_cl) - T::one()
}

pub fn c3<T: Scalar>(horizon: usize, c_cl: T, qbar_norm: T, p_norm: T) -> T {
    let stages: T = (1..horizon).map(|l| c2(l, c_cl)).sum();
    stages * qbar_norm + c2(horizon, c_cl) * p_norm
}

/// `1 - eps3 c_theta / lambda_min(Q)`.
pub fn gamma<T: Scalar>(eps3: T, c_theta: T, q: &DMatrix<T>) -> T {
    T::one() - eps3 * c_theta / min_eig(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaUBound<T: Scalar> {
    pub per_step: Vec<T>,
    pub uniform: T,
}

/// Vertices of the input projection of the constraint set.
fn input_vertices<T: Scalar>(zc: &ConstraintSet<T>) -> Result<Vec<DVector<T>>, GeometryError> {
    let n = zc.f.ncols();
    let m = zc.g.ncols();
    let mut out: Vec<DVector<T>> = Vec::new();
    for v in zc.polytope().vertices()? {
        let u = v.rows(n, m).into_owned();
        if !out.iter().any(|w| (w - &u).amax() <= T::feas_tol()) {
            out.push(u);
        }
    }
    Ok(out)
}

/// Squared distances from the planned inputs to the farthest admissible
/// input. Without a plan every step gets the squared diameter.
pub fn delta_u_bound<T: Scalar>(
    zc: &ConstraintSet<T>,
    ubar: Option<&[DVector<T>]>,
    horizon: usize,
) -> Result<DeltaUBound<T>, GeometryError> {
    let verts = input_vertices(zc)?;
    let mut uniform = T::zero();
    for (i, a) in verts.iter().enumerate() {
        for b in &verts[i + 1..] {
            uniform = uniform.max((a - b).norm_squared());
        }
    }
    let per_step = match ubar {
        Some(plan) => plan
            .iter()
            .map(|u| {
                verts
                    .iter()
                    .map(|v| (v - u).norm_squared())
                    .fold(T::zero(), |a, b| a.max(b))
            })
            .collect(),
        None => vec![uniform; horizon],
    };
    Ok(DeltaUBound { per_step, uniform })
}

/// Model and design constants shared by both bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants<T: Scalar> {
    pub horizon: usize,
    pub c_q: T,
    pub c_r: T,
    /// `max |A(theta)|^2` over the parameter set.
    pub c_a: T,
    pub c_b: T,
    pub c_cl: T,
    pub qbar_norm: T,
    pub p_norm: T,
    pub lambda_min_q: T,
    pub c_f: T,
    pub c_theta: T,
    pub mu: T,
    /// Norm fed to `c1`; `sqrt(c_a)` unless an estimate is pinned.
    pub a_norm: T,
    pub mu_exponent: i32,
    pub dub: DeltaUBound<T>,
}

impl<T: Scalar> BoundConstants<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sys: &AffineParamSystem<T>,
        zc: &ConstraintSet<T>,
        cost: &StageCost<T>,
        cfg: &TubeConfig<T>,
        theta_set: &HPolytope<T>,
        theta_hat: Option<&DVector<T>>,
        mu: T,
        c_theta: T,
        mu_exponent: i32,
    ) -> Result<Self, BoundError> {
        if mu_exponent != 1 && mu_exponent != 2 {
            return Err(BoundError::InvalidExponent(mu_exponent));
        }
        let k = &cfg.k;
        let qbar = &cost.q + k.transpose() * &cost.r * k;
        let a_of = |t: &DVector<T>| sys.assemble(t).map(|(a, _)| a).unwrap();
        let b_of = |t: &DVector<T>| sys.assemble(t).map(|(_, b)| b).unwrap();
        let cl_of = |t: &DVector<T>| sys.closed_loop(t, k).unwrap();
        let c_a = max_norm_over_vertices(a_of, theta_set, true)?;
        let a_norm = match theta_hat {
            Some(th) => spectral_norm(&sys.assemble(th)?.0),
            None => c_a.sqrt(),
        };
        Ok(Self {
            horizon: cfg.horizon,
            c_q: spectral_norm(&cost.q),
            c_r: spectral_norm(&cost.r),
            c_a,
            c_b: max_norm_over_vertices(b_of, theta_set, true)?,
            c_cl: max_norm_over_vertices(cl_of, theta_set, true)?,
            qbar_norm: spectral_norm(&qbar),
            p_norm: spectral_norm(&cfg.p),
            lambda_min_q: min_eig(&cost.q),
            c_f: terminal_constant(cfg)?,
            c_theta,
            mu,
            a_norm,
            mu_exponent,
            dub: delta_u_bound(zc, None, cfg.horizon)?,
        })
    }

    pub fn c3(&self) -> T {
        c3(self.horizon, self.c_cl, self.qbar_norm, self.p_norm)
    }

    pub fn gamma(&self, eps3: T) -> T {
        T::one() - eps3 * self.c_theta / self.lambda_min_q
    }

    /// `sum_l c_Q c1(l)^2 / mu^e`, the coefficient of `|theta_err|^2 (1 + 1/eps1)`.
    fn d_theta_base(&self) -> T {
        let denom = self.mu.powi(self.mu_exponent);
        (0..self.horizon)
            .map(|l| {
                let c = c1(l, self.a_norm);
                self.c_q * c * c / denom
            })
            .sum()
    }
}

/// `max |z + alpha v|_P^2` over vertices `(z, alpha)` of the terminal set
/// and `v` of the cross-section.
pub fn terminal_constant<T: Scalar>(cfg: &TubeConfig<T>) -> Result<T, GeometryError> {
    let n = cfg.n();
    let mut best = T::zero();
    for w in cfg.xf.vertices()? {
        let z = w.rows(0, n).into_owned();
        for v in &cfg.x0_vertices {
            let x = &z + v * w[n];
            best = best.max((&cfg.p * &x).dot(&x));
        }
    }
    Ok(best)
}

/// Per-decision variant: `max |z_N + alpha_N v|_P^2`.
pub fn terminal_constant_at<T: Scalar>(cfg: &TubeConfig<T>, z: &DVector<T>, alpha: T) -> T {
    cfg.x0_vertices
        .iter()
        .map(|v| {
            let x = z + v * alpha;
            (&cfg.p * &x).dot(&x)
        })
        .fold(T::zero(), |a, b| a.max(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop1Terms<T: Scalar> {
    pub c_v: T,
    pub delta_bar1: T,
    pub delta_bar2: T,
    /// Multiplies `|theta_err|^2`.
    pub d_theta_coeff: T,
    pub c_f: T,
}

impl<T: Scalar> Prop1Terms<T> {
    /// Right-hand side given an infinite-horizon value (or an upper bound).
    pub fn bound(&self, v_inf: T, theta_err_norm: T) -> T {
        self.c_v * v_inf
            + self.d_theta_coeff * theta_err_norm * theta_err_norm
            + self.delta_bar1
            + self.delta_bar2
            + self.c_f
    }
}

fn check_eps<T: Scalar>(eps: &[T]) -> Result<(), BoundError> {
    match eps.iter().find(|e| **e <= T::zero() || !e.is_finite()) {
        Some(e) => Err(BoundError::InvalidEpsilon(e.as_f64())),
        None => Ok(()),
    }
}

/// Bound on `V_N` in terms of `V_inf` at one state. `dub` holds one
/// squared input deviation per stage.
pub fn prop1_bound<T: Scalar>(
    k: &BoundConstants<T>,
    eps1: T,
    eps2: T,
    dub: &[T],
) -> Result<Prop1Terms<T>, BoundError> {
    check_eps(&[eps1, eps2])?;
    let one = T::one();
    let mut nested = T::zero();
    for (l, d) in dub.iter().enumerate().take(k.horizon) {
        let geo: T = (0..l).map(|i| k.c_a.powi(i as i32)).sum();
        nested += geo * *d;
    }
    let total: T = dub.iter().take(k.horizon).copied().sum();
    Ok(Prop1Terms {
        c_v: (one + eps1) * (one + eps2),
        delta_bar1: (one + eps1) * (one + one / eps2) * k.c_q * k.c_b * nested,
        delta_bar2: (one + one / eps2) * k.c_r * total,
        d_theta_coeff: k.d_theta_base() * (one + one / eps1),
        c_f: k.c_f,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T: Scalar> {
    pub eps1: T,
    pub eps2: T,
    pub eps3: T,
    pub c_q: T,
    pub c_r: T,
    pub c_a: T,
    pub c_b: T,
    pub c_cl: T,
    pub c_f: T,
    pub c_theta: T,
    pub c3: T,
    pub gamma: T,
    pub mu: T,
    pub c_v: T,
    pub delta_bar1: T,
    pub delta_bar2: T,
    /// `d_theta` evaluated at `theta_err_norm`.
    pub d_theta_tilde: T,
    pub alpha_v: T,
    pub alpha_delta: T,
    pub alpha_f: T,
    pub theta_err_norm: T,
    pub a_of_theta0: T,
    /// `a(s) = a_coeff s^2`.
    pub a_coeff: T,
}

impl<T: Scalar> BoundReport<T> {
    pub fn a(&self, theta_err_norm: T) -> T {
        self.a_coeff * theta_err_norm * theta_err_norm
    }

    /// `alpha_f + alpha_Delta + a`.
    pub fn intercept(&self) -> T {
        self.alpha_f + self.alpha_delta + self.a_of_theta0
    }

    pub fn total(&self, v_inf: T) -> T {
        self.alpha_v * v_inf + self.intercept()
    }

    /// Flat `(name, value)` listing for reports.
    pub fn entries(&self) -> Vec<(&'static str, T)> {
        vec![
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("eps3", self.eps3),
            ("c_Q", self.c_q),
            ("c_R", self.c_r),
            ("c_A", self.c_a),
            ("c_B", self.c_b),
            ("c_cl", self.c_cl),
            ("c_f", self.c_f),
            ("c_theta", self.c_theta),
            ("c3", self.c3),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("c_V", self.c_v),
            ("delta_bar1", self.delta_bar1),
            ("delta_bar2", self.delta_bar2),
            ("d_theta_tilde", self.d_theta_tilde),
            ("alpha_V", self.alpha_v),
            ("alpha_Delta", self.alpha_delta),
            ("alpha_f", self.alpha_f),
            ("theta_err_norm", self.theta_err_norm),
            ("a_of_theta0", self.a_of_theta0),
        ]
    }
}

/// The closed-loop bound with the uniform input deviation bound.
pub fn thm1_bound<T: Scalar>(
    k: &BoundConstants<T>,
    eps1: T,
    eps2: T,
    eps3: T,
    theta_err_norm: T,
) -> Result<BoundReport<T>, BoundError> {
    check_eps(&[eps1, eps2, eps3])?;
    let g = k.gamma(eps3);
    if g <= T::zero() || !g.is_finite() {
        return Err(BoundError::GammaNonpositive(g.as_f64()));
    }
    let dub = vec![k.dub.uniform; k.horizon];
    let p1 = prop1_bound(k, eps1, eps2, &dub)?;
    let c3 = k.c3();
    let s2 = theta_err_norm * theta_err_norm;
    let a_coeff = p1.d_theta_coeff / g + (T::one() + T::one() / eps3) * c3 / (g * k.mu);
    Ok(BoundReport {
        eps1,
        eps2,
        eps3,
        c_q: k.c_q,
        c_r: k.c_r,
        c_a: k.c_a,
        c_b: k.c_b,
        c_cl: k.c_cl,
        c_f: k.c_f,
        c_theta: k.c_theta,
        c3,
        gamma: g,
        mu: k.mu,
        c_v: p1.c_v,
        delta_bar1: p1.delta_bar1,
        delta_bar2: p1.delta_bar2,
        d_theta_tilde: p1.d_theta_coeff * s2,
        alpha_v: p1.c_v / g,
        alpha_delta: (p1.delta_bar1 + p1.delta_bar2) / g,
        alpha_f: p1.c_f / g,
        theta_err_norm,
        a_of_theta0: a_coeff * s2,
        a_coeff,
    })
}

/// `lambda (alpha_V - 1)^2 + alpha_Delta + alpha_f + a`, or `None` where
/// `gamma <= 0`.
pub fn epsilon_objective<T: Scalar>(
    k: &BoundConstants<T>,
    lambda: T,
    theta_err_norm: T,
    eps: [T; 3],
) -> Option<T> {
    let r = thm1_bound(k, eps[0], eps[1], eps[2], theta_err_norm).ok()?;
    let d = r.alpha_v - T::one();
    Some(lambda * d * d + r.alpha_delta + r.alpha_f + r.a_of_theta0)
}

const GRID_LO: f64 = 1e-4;
const GRID_HI: f64 = 1e2;
const GRID_POINTS: usize = 20;

/// Log grid search on `[1e-4, 1e2]^3` followed by three rounds of
/// coordinate-wise golden section in log space.
pub fn optimize_epsilons<T: Scalar>(
    k: &BoundConstants<T>,
    lambda: T,
    theta_err_norm: T,
) -> Result<[T; 3], BoundError> {
    let (lo, hi) = (GRID_LO.ln(), GRID_HI.ln());
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let eval =
        |le: [f64; 3]| epsilon_objective(k, lambda, theta_err_norm, le.map(|x| T::lit(x.exp())));

    let mut best: Option<([f64; 3], T)> = None;
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                if let Some(f) = eval([a, b, c]) {
                    if best.is_none_or(|(_, g)| f < g) {
                        best = Some(([a, b, c], f));
                    }
                }
            }
        }
    }
    let (mut x, mut fx) = best.ok_or(BoundError::NoFeasiblePoint)?;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..3 {
        for i in 0..3 {
            let (mut a, mut b) = ((x[i] - step).max(lo), (x[i] + step).min(hi));
            let at = |t: f64| {
                let mut y = x;
                y[i] = t;
                eval(y)
            };
            // Infeasible points compare as +inf.
            let val = |t: f64| at(t).map_or(f64::INFINITY, |v| v.as_f64());
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let (mut fc, mut fd) = (val(c), val(d));
            for _ in 0..40 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    fc = val(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    fd = val(d);
                }
            }
            let t = 0.5 * (a + b);
            if let Some(ft) = at(t) {
                if ft < fx {
                    x[i] = t;
                    fx = ft;
                }
            }
        }
    }
    Ok(x.map(|v| T::lit(v.exp())))
}

/// Uniform directions on the unit sphere by rejection from the cube.
pub fn sphere_directions<T: Scalar>(n: usize, count: usize, seed: u64) -> Vec<DVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let d = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
        let r: f64 = d.norm();
        if r > 0.1 && r <= 1.0 {
            out.push(d.map(|c| T::lit(c / r)));
        }
    }
    out
}

/// Fractions of the boundary distance at which each ray is sampled.
const RAY_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 0.999];
/// Margin applied to the sampled maximum.
pub const C_THETA_SAFETY: f64 = 1.2;

/// Sampled estimate of `c_theta` with `V_N(x) <= c_theta |x|^2`: the
/// largest ratio along rays through the feasible region, times 1.2.
#[allow(clippy::too_many_arguments)]
pub fn estimate_c_theta<T: Scalar>(
    sys: &AffineParamSystem<T>,
    zc: &ConstraintSet<T>,
    cost: &StageCost<T>,
    cfg: &TubeConfig<T>,
    theta_hat: &DVector<T>,
    theta_set: &HPolytope<T>,
    n_samples: usize,
    seed: u64,
) -> Result<T, BoundError> {
    let thetas = theta_set.vertices()?;
    let mut best: Option<T> = None;
    for d in sphere_directions::<T>(sys.n(), n_samples.max(1), seed) {
        let s_max = match max_feasible_scale(sys, zc, cfg, &thetas, &d) {
            Ok(s) if s > T::zero() => s,
            Ok(_) | Err(TubeError::OcpInfeasible) => continue,
            Err(e) => return Err(e.into()),
        };
        for f in RAY_FRACTIONS {
            let x = &d * (s_max * T::lit(f));
            match solve_ocp_at(sys, zc, cost, cfg, &x, theta_hat, &thetas) {
                Ok(dec) => {
                    let ratio = dec.value / x.norm_squared();
                    best = Some(best.map_or(ratio, |b| b.max(ratio)));
                }
                Err(TubeError::OcpInfeasible) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    best.map(|b| b * T::lit(C_THETA_SAFETY))
        .ok_or(BoundError::NoFeasibleSamples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn c2_values() {
        assert_eq!(c2(4, 1.0), 4.0);
        assert!((c2(1, 0.25f64) - 0.25).abs() < 1e-15);
        assert!((c2(2, 0.25f64) - 0.3125).abs() < 1e-15);
        assert!(c2(0, 0.3f64).abs() < 1e-15);
    }

    #[test]
    fn c3_edge_cases() {
        assert!((c3(1, 0.25f64, 7.0, 3.0) - 0.75).abs() < 1e-15);
        assert_eq!(c3(10, 0.0, 5.0, 5.0), 0.0);
    }

    #[test]
    fn gamma_values() {
        let q = DMatrix::<f64>::identity(2, 2);
        assert!((gamma(0.25, 2.0, &q) - 0.5).abs() < 1e-15);
        assert!((gamma(1e-12, 2.0, &q) - 1.0).abs() < 1e-11);
        assert!(gamma(0.5, 2.0, &q).abs() < 1e-15);
        assert!((gamma(0.25, 2.0, &(q * 2.0)) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn input_interval_bounds() {
        let zc = ConstraintSet::new(
            dmatrix![0.2, 0.0; -0.2, 0.0; 0.0, 0.2; 0.0, -0.2; 0.0, 0.0; 0.0, 0.0],
            dmatrix![0.0; 0.0; 0.0; 0.0; 1.0 / 6.0; -1.0 / 6.0],
        )
        .unwrap();
        let none: DeltaUBound<f64> = delta_u_bound(&zc, None, 3).unwrap();
        assert!((none.uniform - 144.0).abs() < 1e-6);
        assert_eq!(none.per_step.len(), 3);
        let plan = [DVector::zeros(1), DVector::from_element(1, 6.0)];
        let d: DeltaUBound<f64> = delta_u_bound(&zc, Some(&plan), 2).unwrap();
        assert!((d.per_step[0] - 36.0).abs() < 1e-6);
        assert!((d.per_step[1] - 144.0).abs() < 1e-6);
        assert!(d.per_step.iter().all(|p| *p <= d.uniform + 1e-9));
    }
}
