//! Mehrotra predictor-corrector iteration.
//!
//! Works on row-normalized programs. Slack form: `A x + s = b`, `s >= 0`,
//! multipliers `lam >= 0` for the inequalities and `y` for the equalities.
//! Each iteration factors
//!
//! ```text
//!     [ H + A' W A + r I    E' ]
//!     [ E                 -r I ]      W = diag(lam / s)
//! ```
//!
//! once and reuses it for the predictor and corrector solves.

use nalgebra::{DMatrix, DVector};

use super::QuadProgram;
use crate::Scalar;

/// Row-normalized copy of a program. Zero rows are dropped (or flagged when
/// they cannot be satisfied).
pub(super) struct Scaled<T: Scalar> {
    pub program: QuadProgram<T>,
    pub trivially_infeasible: Option<T>,
    ineq_map: Vec<(usize, T)>,
    eq_map: Vec<(usize, T)>,
    m_ineq: usize,
    m_eq: usize,
}

impl<T: Scalar> Scaled<T> {
    pub fn new(p: &QuadProgram<T>) -> Self {
        let n = p.num_vars();
        let tol = T::feas_tol();
        let tiny = T::default_epsilon() * T::lit(1e3);
        let mut trivially_infeasible: Option<T> = None;
        let mut flag = |v: T| {
            trivially_infeasible = Some(trivially_infeasible.map_or(v, |w: T| w.max(v)));
        };

        let mut ineq_map = Vec::new();
        for i in 0..p.b_ineq.len() {
            let norm = p.a_ineq.row(i).norm();
            if norm > tiny {
                ineq_map.push((i, norm));
            } else if p.b_ineq[i] < -tol {
                flag(-p.b_ineq[i]);
            }
        }
        let mut eq_map = Vec::new();
        for i in 0..p.b_eq.len() {
            let norm = p.a_eq.row(i).norm();
            if norm > tiny {
                eq_map.push((i, norm));
            } else if p.b_eq[i].abs() > tol {
                flag(p.b_eq[i].abs());
            }
        }

        let mut a = DMatrix::zeros(ineq_map.len(), n);
        let mut b = DVector::zeros(ineq_map.len());
        for (k, &(i, norm)) in ineq_map.iter().enumerate() {
            a.row_mut(k).copy_from(&(p.a_ineq.row(i) / norm));
            b[k] = p.b_ineq[i] / norm;
        }
        let mut e = DMatrix::zeros(eq_map.len(), n);
        let mut f = DVector::zeros(eq_map.len());
        for (k, &(i, norm)) in eq_map.iter().enumerate() {
            e.row_mut(k).copy_from(&(p.a_eq.row(i) / norm));
            f[k] = p.b_eq[i] / norm;
        }
        let program = QuadProgram::new(p.hessian.clone(), p.linear.clone())
            .with_inequalities(a, b)
            .with_equalities(e, f);
        Self {
            program,
            trivially_infeasible,
            ineq_map,
            eq_map,
            m_ineq: p.b_ineq.len(),
            m_eq: p.b_eq.len(),
        }
    }

    /// Maps multipliers of the normalized rows back to the original rows.
    pub fn unscale_duals(&self, lam: &DVector<T>, y: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let mut li = DVector::zeros(self.m_ineq);
        for (k, &(i, norm)) in self.ineq_map.iter().enumerate() {
            li[i] = lam[k] / norm;
        }
        let mut le = DVector::zeros(self.m_eq);
        for (k, &(i, norm)) in self.eq_map.iter().enumerate() {
            le[i] = y[k] / norm;
        }
        (li, le)
    }
}

pub(super) struct Iterate<T: Scalar> {
    pub x: DVector<T>,
    pub lam: DVector<T>,
    pub y: DVector<T>,
    pub iterations: usize,
}

pub(super) enum Outcome<T: Scalar> {
    Converged(Iterate<T>),
    Failed { iterations: usize },
}

struct Kkt<T: Scalar> {
    lu: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    exact: DMatrix<T>,
}

impl<T: Scalar> Kkt<T> {
    fn assemble(p: &QuadProgram<T>, w: &DVector<T>, reg: T) -> Option<Self> {
        let n = p.num_vars();
        let me = p.b_eq.len();
        let mut wa = p.a_ineq.clone();
        for (mut row, &wi) in wa.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let mut exact = DMatrix::zeros(n + me, n + me);
        {
            let mut top = exact.view_mut((0, 0), (n, n));
            top.copy_from(&p.hessian);
            top.gemm_tr(T::one(), &p.a_ineq, &wa, T::one());
        }
        exact.view_mut((n, 0), (me, n)).copy_from(&p.a_eq);
        exact
            .view_mut((0, n), (n, me))
            .copy_from(&p.a_eq.transpose());
        // Extreme barrier weights can swamp whole directions in rounding; the
        // regularization is then raised relative to the diagonal and the
        // refinement in `solve` recovers the exact system.
        let diag = (0..n).fold(T::zero(), |acc, i| acc.max(exact[(i, i)].abs()));
        let mut delta = reg;
        for _ in 0..5 {
            let mut reg_mat = exact.clone();
            for i in 0..n {
                reg_mat[(i, i)] += delta;
            }
            for i in n..n + me {
                reg_mat[(i, i)] -= delta;
            }
            let lu = reg_mat.lu();
            if lu.is_invertible() {
                return Some(Self { lu, exact });
            }
            delta = delta.max(diag * T::default_epsilon()) * T::lit(1e2);
        }
        None
    }

    /// Solves with up to three steps of iterative refinement against the
    /// unregularized matrix.
    fn solve(&self, rhs: &DVector<T>) -> Option<DVector<T>> {
        let mut sol = self.lu.solve(rhs)?;
        let mut resid = rhs - &self.exact * &sol;
        for _ in 0..3 {
            let Some(corr) = self.lu.solve(&resid) else {
                break;
            };
            let candidate = &sol + corr;
            let new_resid = rhs - &self.exact * &candidate;
            if new_resid.amax() >= resid.amax() {
                break;
            }
            sol = candidate;
            resid = new_resid;
        }
        if sol.iter().all(|v| v.is_finite()) {
            Some(sol)
        } else {
            None
        }
    }
}

struct Direction<T: Scalar> {
    dx: DVector<T>,
    ds: DVector<T>,
    dlam: DVector<T>,
    dy: DVector<T>,
}

fn max_step<T: Scalar>(v: &DVector<T>, dv: &DVector<T>) -> T {
    let mut alpha = T::one();
    for (&vi, &di) in v.iter().zip(dv.iter()) {
        if di < T::zero() {
            alpha = alpha.min(-vi / di);
        }
    }
    alpha
}

pub(super) fn run<T: Scalar>(p: &QuadProgram<T>, tol: T, reg: T, max_iter: usize) -> Outcome<T> {
    let n = p.num_vars();
    let m = p.b_ineq.len();
    let me = p.b_eq.len();
    let (a, b, e, f, h, g) = (
        &p.a_ineq, &p.b_ineq, &p.a_eq, &p.b_eq, &p.hessian, &p.linear,
    );
    let one = T::one();
    let zero = T::zero();

    if n == 0 {
        let ok =
            b.iter().all(|&v| v >= -T::feas_tol()) && f.iter().all(|&v| v.abs() <= T::feas_tol());
        return if ok {
            Outcome::Converged(Iterate {
                x: DVector::zeros(0),
                lam: DVector::zeros(m),
                y: DVector::zeros(me),
                iterations: 0,
            })
        } else {
            Outcome::Failed { iterations: 0 }
        };
    }

    let b_scale = one + b.amax().max(f.amax());
    let g_scale = one + g.amax().max(h.amax());

    // Starting point: least-squares-regularized minimizer, then Mehrotra's
    // positivity shift.
    let Some(kkt0) = Kkt::assemble(p, &DVector::from_element(m, one), reg.max(T::lit(1e-8))) else {
        return Outcome::Failed { iterations: 0 };
    };
    let mut rhs = DVector::zeros(n + me);
    rhs.rows_mut(0, n).copy_from(&(-g + a.transpose() * b));
    rhs.rows_mut(n, me).copy_from(f);
    let Some(start) = kkt0.solve(&rhs) else {
        return Outcome::Failed { iterations: 0 };
    };
    let mut x = start.rows(0, n).into_owned();
    let mut y = start.rows(n, me).into_owned();
    let mut s = b - a * &x;
    let mut lam = -s.clone();
    if m > 0 {
        let shift_s = (-s.min() * T::lit(1.5)).max(zero);
        let shift_l = (-lam.min() * T::lit(1.5)).max(zero);
        s.add_scalar_mut(shift_s);
        lam.add_scalar_mut(shift_l);
        let prod = s.dot(&lam);
        let (ss, sl) = (s.sum(), lam.sum());
        if prod > zero && ss > zero && sl > zero {
            s.add_scalar_mut(T::lit(0.5) * prod / sl);
            lam.add_scalar_mut(T::lit(0.5) * prod / ss);
        }
        let floor = T::lit(1e-2) * b_scale.min(g_scale);
        s.apply(|v| *v = v.max(floor));
        lam.apply(|v| *v = v.max(floor));
    }

    let diverge = T::lit(1e12) * (b_scale + g_scale);
    let mut best_merit = T::max_value().unwrap_or(one / T::default_epsilon());
    let mut since_best = 0usize;
    let mut tiny_steps = 0usize;
    let mut fallback: Option<(T, Iterate<T>)> = None;

    for it in 0..max_iter {
        let rd = h * &x + g + a.transpose() * &lam + e.transpose() * &y;
        let rp = a * &x + &s - b;
        let re = e * &x - f;
        let mu = if m > 0 {
            s.dot(&lam) / T::from_usize(m).unwrap()
        } else {
            zero
        };
        let res_p = rp.amax().max(re.amax()) / b_scale;
        let res_d = rd.amax() / g_scale;
        if res_p <= tol && res_d <= tol && mu <= tol * T::lit(0.1) {
            return Outcome::Converged(Iterate {
                x,
                lam,
                y,
                iterations: it,
            });
        }
        // Degenerate programs (nearly parallel rows) leave the duals badly
        // determined even when the primal has converged; recover them from
        // the active set instead.
        if res_d > T::feas_tol() && res_p <= T::feas_tol() * T::lit(0.1) && mu <= T::feas_tol() {
            if let Some(it) = polish(p, &x, &s, &lam, it, g_scale) {
                return Outcome::Converged(it);
            }
        }
        // Acceptable stopping point if the Newton systems break down this
        // close to the solution. The dual side uses the looser target of
        // `KktResiduals::certified`: on thin sets the objective can be
        // nearly orthogonal to the feasible segment, leaving a residual near
        // 1e-8 at every point. Late iterations can drift away again, so the
        // best such iterate is kept.
        let near = res_p <= T::feas_tol() * T::lit(0.1)
            && res_d <= T::feas_tol() * T::lit(100.0)
            && mu <= T::feas_tol();
        let merit = res_p.max(res_d).max(mu);
        if near && fallback.as_ref().is_none_or(|(m, _)| merit < *m) {
            fallback = Some((
                merit,
                Iterate {
                    x: x.clone(),
                    lam: lam.clone(),
                    y: y.clone(),
                    iterations: it,
                },
            ));
        }
        if x.amax() > diverge || lam.amax() > diverge || y.amax() > diverge {
            return finish(fallback, it);
        }
        if merit < best_merit * T::lit(0.99) {
            best_merit = merit;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 40 {
                return finish(fallback, it);
            }
        }

        let w = lam.component_div(&s);
        let Some(kkt) = Kkt::assemble(p, &w, reg) else {
            return finish(fallback, it);
        };
        let solve = |rc: &DVector<T>| -> Option<Direction<T>> {
            let t = (rc + lam.component_mul(&rp)).component_div(&s);
            let mut rhs = DVector::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(&(-&rd - a.transpose() * &t));
            rhs.rows_mut(n, me).copy_from(&(-&re));
            let sol = kkt.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = sol.rows(n, me).into_owned();
            let adx = a * &dx;
            let dlam = w.component_mul(&adx) + t;
            let ds = -&rp - adx;
            Some(Direction { dx, ds, dlam, dy })
        };

        let rc_aff = -s.component_mul(&lam);
        let Some(aff) = solve(&rc_aff) else {
            return finish(fallback, it);
        };
        let dir = if m > 0 {
            let alpha_aff = max_step(&s, &aff.ds).min(max_step(&lam, &aff.dlam));
            let s_aff = &s + &aff.ds * alpha_aff;
            let l_aff = &lam + &aff.dlam * alpha_aff;
            let mu_aff = s_aff.dot(&l_aff) / T::from_usize(m).unwrap();
            let sigma = if mu > zero {
                (mu_aff / mu).powi(3).min(one)
            } else {
                zero
            };
            let rc =
                rc_aff - aff.ds.component_mul(&aff.dlam) + DVector::from_element(m, sigma * mu);
            match solve(&rc) {
                Some(d) => d,
                None => return finish(fallback, it),
            }
        } else {
            aff
        };

        let alpha_max = max_step(&s, &dir.ds).min(max_step(&lam, &dir.dlam));
        let alpha = if m > 0 {
            (alpha_max * T::lit(0.995)).min(one)
        } else {
            one
        };
        if alpha < T::lit(1e-10) {
            tiny_steps += 1;
            if tiny_steps > 5 {
                return finish(fallback, it);
            }
        } else {
            tiny_steps = 0;
        }
        x += &dir.dx * alpha;
        s += &dir.ds * alpha;
        lam += &dir.dlam * alpha;
        y += &dir.dy * alpha;
        // Keep strictly interior despite rounding.
        let floor = T::default_epsilon() * T::lit(1e-3);
        s.apply(|v| *v = v.max(floor));
        lam.apply(|v| *v = v.max(floor));
    }
    finish(fallback, max_iter)
}

fn finish<T: Scalar>(fallback: Option<(T, Iterate<T>)>, iterations: usize) -> Outcome<T> {
    match fallback {
        Some((_, it)) => Outcome::Converged(it),
        None => Outcome::Failed { iterations },
    }
}

/// Multipliers for a fixed primal point: the active set is read off the
/// iterate (`lam > s`), stationarity is solved in least squares, and
/// negative multipliers are dropped one at a time. Accepted only under the
/// near-optimal residual test.
fn polish<T: Scalar>(
    p: &QuadProgram<T>,
    x: &DVector<T>,
    s: &DVector<T>,
    lam: &DVector<T>,
    iterations: usize,
    g_scale: T,
) -> Option<Iterate<T>> {
    let n = x.len();
    let me = p.b_eq.len();
    let grad = &p.hessian * x + &p.linear;
    let mut active: Vec<usize> = (0..s.len()).filter(|&i| lam[i] > s[i]).collect();
    loop {
        let k = active.len();
        let mut m = DMatrix::zeros(n, k + me);
        for (c, &i) in active.iter().enumerate() {
            m.column_mut(c).copy_from(&p.a_ineq.row(i).transpose());
        }
        m.view_mut((0, k), (n, me)).copy_from(&p.a_eq.transpose());
        let z = if k + me == 0 {
            DVector::zeros(0)
        } else {
            m.clone()
                .svd(true, true)
                .solve(&(-&grad), T::default_epsilon())
                .ok()?
        };
        let worst =
            (0..k).min_by(|&a, &b| z[a].partial_cmp(&z[b]).unwrap_or(std::cmp::Ordering::Equal));
        if let Some(w) = worst.filter(|&w| z[w] < T::zero()) {
            active.remove(w);
            continue;
        }
        let mut l = DVector::zeros(s.len());
        for (c, &i) in active.iter().enumerate() {
            l[i] = z[c];
        }
        let y = z.rows(k, me).into_owned();
        let rd = &grad + p.a_ineq.transpose() * &l + p.a_eq.transpose() * &y;
        let gap = l.dot(&s.map(|v| v.max(T::zero())));
        let m_count = T::from_usize(s.len().max(1)).unwrap();
        if rd.amax() / g_scale <= T::feas_tol() && gap / m_count <= T::feas_tol() {
            return Some(Iterate {
                x: x.clone(),
                lam: l,
                y,
                iterations,
            });
        }
        return None;
    }
}
