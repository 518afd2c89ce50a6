//! The online tube program and its a posteriori checks.
//!
//! Containment of the successor tube only needs checking at the vertices of
//! the membership set and of `X0`. Since `alpha >= 0`, the `X0` vertices
//! reduce exactly to one coefficient per row:
//! `c_ri = max_j H0_r A_cl(theta^i) v^j`.

use nalgebra::{DMatrix, DVector};

use super::{TubeConfig, TubeDecision, TubeError};
use crate::geometry::HPolytope;
use crate::model::{AffineParamSystem, ConstraintSet, StageCost};
use crate::qp::{solve_lp, solve_qp, QpStatus, QuadProgram};
use crate::Scalar;

/// Column layout of the stacked decision vector
/// `(z_0..z_N, alpha_0..alpha_N, v_0..v_{N-1}, x_hat_0..x_hat_N, s)`.
/// The nominal block and the scale column are optional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OcpLayout {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub nominal: bool,
    pub scale: bool,
}

impl OcpLayout {
    pub fn z(&self, l: usize) -> usize {
        l * self.n
    }

    pub fn alpha(&self, l: usize) -> usize {
        (self.horizon + 1) * self.n + l
    }

    pub fn v(&self, l: usize) -> usize {
        (self.horizon + 1) * (self.n + 1) + l * self.m
    }

    pub fn xhat(&self, l: usize) -> usize {
        debug_assert!(self.nominal);
        (self.horizon + 1) * (self.n + 1) + self.horizon * self.m + l * self.n
    }

    pub fn s(&self) -> usize {
        debug_assert!(self.scale);
        let base = (self.horizon + 1) * (self.n + 1) + self.horizon * self.m;
        base + if self.nominal {
            (self.horizon + 1) * self.n
        } else {
            0
        }
    }

    pub fn num_vars(&self) -> usize {
        let base = (self.horizon + 1) * (self.n + 1) + self.horizon * self.m;
        base + if self.nominal {
            (self.horizon + 1) * self.n
        } else {
            0
        } + usize::from(self.scale)
    }
}

struct VertexData<T: Scalar> {
    ha: DMatrix<T>,
    hb: DMatrix<T>,
    c: DVector<T>,
}

fn vertex_data<T: Scalar>(
    sys: &AffineParamSystem<T>,
    cfg: &TubeConfig<T>,
    thetas: &[DVector<T>],
) -> Result<Vec<VertexData<T>>, TubeError> {
    thetas
        .iter()
        .map(|th| {
            let (a, b) = sys.assemble(th)?;
            let ha = &cfg.h0 * (a + &b * &cfg.k);
            let hb = &cfg.h0 * b;
            let c = DVector::from_iterator(
                ha.nrows(),
                (0..ha.nrows()).map(|r| {
                    cfg.x0_vertices
                        .iter()
                        .map(|v| ha.row(r).dot(&v.transpose()))
                        .fold(T::min_value().unwrap(), |a, b| a.max(b))
                }),
            );
            Ok(VertexData { ha, hb, c })
        })
        .collect()
}

/// The inequality rows shared by the tube program and the scale LP. The
/// initial tube row reads `-H0 z_0 - alpha_0 <= -H0 x_k` with a given state,
/// or `-H0 z_0 - alpha_0 + s H0 d <= 0` in scale mode.
fn inequalities<T: Scalar>(
    lay: &OcpLayout,
    zc: &ConstraintSet<T>,
    cfg: &TubeConfig<T>,
    verts: &[VertexData<T>],
    x_k: &DVector<T>,
) -> (DMatrix<T>, DVector<T>) {
    let (n, m, big_n) = (lay.n, lay.m, lay.horizon);
    let nh = cfg.h0.nrows();
    let fk = &zc.f + &zc.g * &cfg.k;
    let nf = fk.nrows();
    let depth: Vec<T> = (0..nf)
        .map(|r| {
            cfg.x0_vertices
                .iter()
                .map(|v| fk.row(r).dot(&v.transpose()))
                .fold(T::min_value().unwrap(), |a, b| a.max(b))
        })
        .collect();
    let xf = &cfg.xf;
    let rows = nh + big_n * verts.len() * nh + big_n * nf + xf.num_facets() + big_n + 1;
    let mut a = DMatrix::zeros(rows, lay.num_vars());
    let mut b = DVector::zeros(rows);
    let mut row = 0;

    let hx = &cfg.h0 * x_k;
    for r in 0..nh {
        for c in 0..n {
            a[(row, lay.z(0) + c)] = -cfg.h0[(r, c)];
        }
        a[(row, lay.alpha(0))] = -T::one();
        if lay.scale {
            a[(row, lay.s())] = hx[r];
        } else {
            b[row] = -hx[r];
        }
        row += 1;
    }

    for l in 0..big_n {
        for vd in verts {
            for r in 0..nh {
                for c in 0..n {
                    a[(row, lay.z(l) + c)] = vd.ha[(r, c)];
                    a[(row, lay.z(l + 1) + c)] = -cfg.h0[(r, c)];
                }
                for c in 0..m {
                    a[(row, lay.v(l) + c)] = vd.hb[(r, c)];
                }
                a[(row, lay.alpha(l))] = vd.c[r];
                a[(row, lay.alpha(l + 1))] = -T::one();
                row += 1;
            }
        }
        for r in 0..nf {
            for c in 0..n {
                a[(row, lay.z(l) + c)] = fk[(r, c)];
            }
            for c in 0..m {
                a[(row, lay.v(l) + c)] = zc.g[(r, c)];
            }
            a[(row, lay.alpha(l))] = depth[r];
            b[row] = T::one();
            row += 1;
        }
    }

    for r in 0..xf.num_facets() {
        for c in 0..n {
            a[(row, lay.z(big_n) + c)] = xf.a[(r, c)];
        }
        a[(row, lay.alpha(big_n))] = xf.a[(r, n)];
        b[row] = xf.b[r];
        row += 1;
    }
    for l in 0..=big_n {
        a[(row, lay.alpha(l))] = -T::one();
        row += 1;
    }
    debug_assert_eq!(row, rows);
    (a, b)
}

/// Assembles the tube program at state `x_k` with point estimate
/// `theta_hat` and membership set vertices `thetas`.
pub fn build_ocp<T: Scalar>(
    sys: &AffineParamSystem<T>,
    zc: &ConstraintSet<T>,
    cost: &StageCost<T>,
    cfg: &TubeConfig<T>,
    x_k: &DVector<T>,
    theta_hat: &DVector<T>,
    thetas: &[DVector<T>],
) -> Result<(QuadProgram<T>, OcpLayout), TubeError> {
    let (n, m, big_n) = (sys.n(), sys.m(), cfg.horizon);
    if cfg.n() != n || cfg.m() != m || x_k.len() != n || theta_hat.len() != sys.p() {
        return Err(TubeError::DimensionMismatch(format!(
            "system ({n}, {m}), tube config ({}, {}), state {}, estimate {}",
            cfg.n(),
            cfg.m(),
            x_k.len(),
            theta_hat.len()
        )));
    }
    let lay = OcpLayout {
        n,
        m,
        horizon: big_n,
        nominal: true,
        scale: false,
    };
    let verts = vertex_data(sys, cfg, thetas)?;
    let (a_in, b_in) = inequalities(&lay, zc, cfg, &verts, x_k);

    let nv = lay.num_vars();
    let two = T::lit(2.0);
    let (q, r, k) = (&cost.q, &cost.r, &cfg.k);
    let qk = (q + k.transpose() * r * k) * two;
    let kr = (k.transpose() * r) * two;
    let rr = r * two;
    let mut h = DMatrix::zeros(nv, nv);
    for l in 0..big_n {
        let (xi, vi) = (lay.xhat(l), lay.v(l));
        h.view_mut((xi, xi), (n, n)).copy_from(&qk);
        h.view_mut((xi, vi), (n, m)).copy_from(&kr);
        h.view_mut((vi, xi), (m, n)).copy_from(&kr.transpose());
        h.view_mut((vi, vi), (m, m)).copy_from(&rr);
    }
    let xn = lay.xhat(big_n);
    h.view_mut((xn, xn), (n, n)).copy_from(&(&cfg.p * two));

    let (ah, bh) = sys.assemble(theta_hat)?;
    let acl = &ah + &bh * k;
    let mut a_eq = DMatrix::zeros((big_n + 1) * n, nv);
    let mut b_eq = DVector::zeros((big_n + 1) * n);
    for c in 0..n {
        a_eq[(c, lay.xhat(0) + c)] = T::one();
        b_eq[c] = x_k[c];
    }
    for l in 0..big_n {
        let row = (l + 1) * n;
        for i in 0..n {
            a_eq[(row + i, lay.xhat(l + 1) + i)] = T::one();
            for c in 0..n {
                a_eq[(row + i, lay.xhat(l) + c)] -= acl[(i, c)];
            }
            for c in 0..m {
                a_eq[(row + i, lay.v(l) + c)] = -bh[(i, c)];
            }
        }
    }
    let qp = QuadProgram::new(h, DVector::zeros(nv))
        .with_inequalities(a_in, b_in)
        .with_equalities(a_eq, b_eq);
    Ok((qp, lay))
}

/// Solves the tube program over the vertices of the membership set.
pub fn solve_ocp<T: Scalar>(
    sys: &AffineParamSystem<T>,
    zc: &ConstraintSet<T>,
    cost: &StageCost<T>,
    cfg: &TubeConfig<T>,
    x_k: &DVector<T>,
    theta_hat: &DVector<T>,
    theta_set: &HPolytope<T>,
) -> Result<TubeDecision<T>, TubeError> {
    let thetas = theta_set.vertices()?;
    solve_ocp_at(sys, zc, cost, cfg, x_k, theta_hat, &thetas)
}

pub fn solve_ocp_at<T: Scalar>(
    sys: &AffineParamSystem<T>,
    zc: &ConstraintSet<T>,
    cost: &StageCost<T>,
    cfg: &TubeConfig<T>,
    x_k: &DVector<T>,
    theta_hat: &DVector<T>,
    thetas: &[DVector<T>],
) -> Result<TubeDecision<T>, TubeError> {
    let (qp, lay) = build_ocp(sys, zc, cost, cfg, x_k, theta_hat, thetas)?;
    let sol = solve_qp(&qp)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(TubeError::OcpInfeasible),
        QpStatus::Unbounded => {
            return Err(TubeError::SynthesisFailed(
                "tube program is unbounded; constraints do not bound the tubes".into(),
            ))
        }
    }
    let y = &sol.x;
    let big_n = lay.horizon;
    let block = |start: usize, len: usize| y.rows(start, len).into_owned();
    Ok(TubeDecision {
        z: (0..=big_n).map(|l| block(lay.z(l), lay.n)).collect(),
        alpha: (0..=big_n).map(|l| y[lay.alpha(l)]).collect(),
        v: (0..big_n).map(|l| block(lay.v(l), lay.m)).collect(),
        nominal: (0..=big_n).map(|l| block(lay.xhat(l), lay.n)).collect(),
        value: sol.objective,
        iterations: sol.iterations,
        regularization: sol.regularization,
    })
}

/// `u_k = K x_k + v_0`.
pub fn control_input<T: Scalar>(
    cfg: &TubeConfig<T>,
    decision: &TubeDecision<T>,
    x_k: &DVector<T>,
) -> DVector<T> {
    &cfg.k * x_k + &decision.v[0]
}

/// Worst excesses found by re-checking a decision directly on the
/// vertices; every field is nonpositive for a sound tube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeCheck<T: Scalar> {
    pub initial: T,
    pub successor: T,
    pub constraints: T,
    pub terminal: T,
    pub scale_sign: T,
}

impl<T: Scalar> TubeCheck<T> {
    pub fn max(&self) -> T {
        self.initial
            .max(self.successor)
            .max(self.constraints)
            .max(self.terminal)
            .max(self.scale_sign)
    }

    pub fn is_sound(&self, tol: T) -> bool {
        self.max() <= tol
    }
}

/// Rechecks a decision pointwise: every vertex `z_l + alpha_l v^j` is
/// propagated through every `theta^i` with input `K x + v_l` and tested
/// against the next tube and the constraints.
pub fn check_tube<T: Scalar>(
    sys: &AffineParamSystem<T>,
    zc: &ConstraintSet<T>,
    cfg: &TubeConfig<T>,
    decision: &TubeDecision<T>,
    thetas: &[DVector<T>],
    x_k: &DVector<T>,
) -> Result<TubeCheck<T>, TubeError> {
    let big_n = decision.v.len();
    let neg = T::min_value().unwrap();
    let mut check = TubeCheck {
        initial: cfg.tube_excess(x_k, &decision.z[0], decision.alpha[0]),
        successor: neg,
        constraints: neg,
        terminal: cfg
            .xf
            .violation(&stack(&decision.z[big_n], decision.alpha[big_n])),
        scale_sign: decision.alpha.iter().fold(neg, |a, &b| a.max(-b)),
    };
    let models = thetas
        .iter()
        .map(|th| sys.assemble(th))
        .collect::<Result<Vec<_>, _>>()?;
    for l in 0..big_n {
        for v in &cfg.x0_vertices {
            let x = &decision.z[l] + v * decision.alpha[l];
            let u = &cfg.k * &x + &decision.v[l];
            check.constraints = check.constraints.max(zc.violation(&x, &u));
            for (a, b) in &models {
                let next = a * &x + b * &u;
                let e = cfg.tube_excess(&next, &decision.z[l + 1], decision.alpha[l + 1]);
                check.successor = check.successor.max(e);
            }
        }
    }
    Ok(check)
}

fn stack<T: Scalar>(z: &DVector<T>, alpha: T) -> DVector<T> {
    let mut y = DVector::zeros(z.len() + 1);
    y.rows_mut(0, z.len()).copy_from(z);
    y[z.len()] = alpha;
    y
}

/// Largest `s >= 0` such that the tube program at `x_k = s d` is feasible
/// over the given membership set vertices.
pub fn max_feasible_scale<T: Scalar>(
    sys: &AffineParamSystem<T>,
    zc: &ConstraintSet<T>,
    cfg: &TubeConfig<T>,
    thetas: &[DVector<T>],
    d: &DVector<T>,
) -> Result<T, TubeError> {
    let lay = OcpLayout {
        n: sys.n(),
        m: sys.m(),
        horizon: cfg.horizon,
        nominal: false,
        scale: true,
    };
    let verts = vertex_data(sys, cfg, thetas)?;
    let (a, b) = inequalities(&lay, zc, cfg, &verts, d);
    let nv = lay.num_vars();
    let rows = a.nrows();
    let mut a = a.resize_vertically(rows + 1, T::zero());
    a[(rows, lay.s())] = -T::one();
    let b = b.push(T::zero());
    let mut g = DVector::zeros(nv);
    g[lay.s()] = -T::one();
    let sol = solve_lp(&g, &a, &b, &DMatrix::zeros(0, nv), &DVector::zeros(0))?;
    match sol.status {
        QpStatus::Optimal => Ok(sol.x[lay.s()]),
        QpStatus::Infeasible => Err(TubeError::OcpInfeasible),
        QpStatus::Unbounded => Err(TubeError::SynthesisFailed(
            "feasible region is unbounded along the direction".into(),
        )),
    }
}
