//! Vertex enumeration.
//!
//! Full-dimensional polytopes go through the double-description method on
//! the homogenized cone `{(t, w) : t >= 0, A w <= t (b - A c)}`, where `c` is
//! an interior point. Flat polytopes are first reduced to their affine hull.

use nalgebra::{DMatrix, DVector};

use super::{lp_argmax, AffineHull, GeometryError, HPolytope};
use crate::Scalar;

pub(super) fn enumerate<T: Scalar>(p: &HPolytope<T>) -> Result<Vec<DVector<T>>, GeometryError> {
    let d = p.dim();
    let p = p.normalized()?;
    if d == 0 {
        return if p.b.iter().all(|&v| v >= -T::feas_tol()) {
            Ok(vec![DVector::zeros(0)])
        } else {
            Err(GeometryError::EmptyPolytope)
        };
    }
    let (hull, flat_rows) = affine_hull(&p)?;
    let k = hull.dim();
    if k == d {
        return double_description(&p);
    }
    if k == 0 {
        return Ok(vec![hull.point]);
    }
    let keep: Vec<usize> = (0..p.num_facets()).filter(|&i| !flat_rows[i]).collect();
    let a = p.a.select_rows(keep.iter());
    let b = DVector::from_iterator(keep.len(), keep.iter().map(|&i| p.b[i]));
    let reduced = HPolytope {
        a: &a * &hull.basis,
        b: b - &a * &hull.point,
    };
    let verts = enumerate(&reduced)?;
    Ok(verts
        .into_iter()
        .map(|t| &hull.point + &hull.basis * t)
        .collect())
}

/// Affine hull of a normalized polytope together with the rows that are
/// implicit equalities (and can be dropped once the hull is imposed).
pub(super) fn affine_hull<T: Scalar>(
    p: &HPolytope<T>,
) -> Result<(AffineHull<T>, Vec<bool>), GeometryError> {
    let d = p.dim();
    let m = p.num_facets();
    let flat = T::flat_tol();
    let two = T::lit(2.0);

    let mut pts = Vec::with_capacity(2 * d);
    for i in 0..d {
        for s in [T::one(), -T::one()] {
            let mut c = DVector::zeros(d);
            c[i] = s;
            pts.push(lp_argmax(&p.a, &p.b, &c)?);
        }
    }
    for _ in 0..=d {
        let (_, basis) = spread(&pts, flat);
        if basis.ncols() == d {
            break;
        }
        let comp = complement(&basis.transpose(), d);
        let mut grew = false;
        for w in comp.column_iter() {
            let w = w.into_owned();
            let hi = lp_argmax(&p.a, &p.b, &w)?;
            let lo = lp_argmax(&p.a, &p.b, &-&w)?;
            if w.dot(&hi) - w.dot(&lo) > two * flat {
                pts.push(hi);
                pts.push(lo);
                grew = true;
                break;
            }
        }
        if !grew {
            break;
        }
    }
    let (point, spread_basis) = spread(&pts, flat);
    let k = spread_basis.ncols();
    if k == d {
        return Ok((
            AffineHull {
                point,
                basis: DMatrix::identity(d, d),
            },
            vec![false; m],
        ));
    }

    // Rows whose range over the polytope is within the flatness tolerance.
    let mut flat_rows = vec![false; m];
    for i in 0..m {
        let row = p.a.row(i).transpose();
        let big = T::max_value().unwrap();
        let (lo_pts, hi_pts) = pts.iter().fold((big, -big), |(lo, hi), x| {
            let v = row.dot(x);
            (lo.min(v), hi.max(v))
        });
        if hi_pts - lo_pts > two * flat {
            continue;
        }
        let lo = row.dot(&lp_argmax(&p.a, &p.b, &-&row)?);
        flat_rows[i] = p.b[i] - lo <= two * flat;
    }

    // Normal space: dominant directions of the flat rows, topped up from the
    // point spread when the rows do not span enough directions.
    let need = d - k;
    let idx: Vec<usize> = (0..m).filter(|&i| flat_rows[i]).collect();
    let mut normals: Vec<DVector<T>> = Vec::new();
    if !idx.is_empty() {
        let e = p.a.select_rows(idx.iter());
        let svd = e.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&x, &y| {
            svd.singular_values[y]
                .partial_cmp(&svd.singular_values[x])
                .unwrap()
        });
        for &j in order.iter().take(need) {
            if svd.singular_values[j] > T::lit(1e-9) {
                normals.push(vt.row(j).transpose());
            }
        }
    }
    if normals.len() < need {
        let comp = complement(&spread_basis.transpose(), d);
        for c in comp.column_iter() {
            if normals.len() == need {
                break;
            }
            let mut v = c.into_owned();
            for n in &normals {
                let proj = n.dot(&v);
                v -= n * proj;
            }
            let norm = v.norm();
            if norm > T::lit(1e-6) {
                normals.push(v / norm);
            }
        }
    }
    let basis = if normals.is_empty() {
        DMatrix::identity(d, d)
    } else {
        let nm = DMatrix::from_rows(&normals.iter().map(|n| n.transpose()).collect::<Vec<_>>());
        complement(&nm, d)
    };
    // Only rows orthogonal to the hull can be dropped.
    for i in 0..m {
        if flat_rows[i] && (p.a.row(i) * &basis).norm() > T::lit(1e-9) {
            flat_rows[i] = false;
        }
    }
    Ok((AffineHull { point, basis }, flat_rows))
}

/// Mean of the points and an orthonormal basis of their spread above `tol`.
fn spread<T: Scalar>(pts: &[DVector<T>], tol: T) -> (DVector<T>, DMatrix<T>) {
    let d = pts[0].len();
    let n = T::from_usize(pts.len()).unwrap();
    let mean = pts.iter().fold(DVector::zeros(d), |acc, p| acc + p) / n;
    let mut diffs = DMatrix::zeros(d, pts.len());
    for (j, p) in pts.iter().enumerate() {
        diffs.set_column(j, &(p - &mean));
    }
    let svd = diffs.svd(true, false);
    let u = svd.u.expect("requested");
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&j| svd.singular_values[j] > tol)
        .collect();
    (mean, u.select_columns(cols.iter()))
}

/// Orthonormal basis of the orthogonal complement of the row space of the
/// orthonormal rows `n`.
pub(super) fn complement<T: Scalar>(n: &DMatrix<T>, d: usize) -> DMatrix<T> {
    if n.nrows() == 0 {
        return DMatrix::identity(d, d);
    }
    let proj = DMatrix::identity(d, d) - n.transpose() * n;
    let eig = proj.symmetric_eigen();
    let cols: Vec<usize> = (0..d)
        .filter(|&j| eig.eigenvalues[j] > T::lit(0.5))
        .collect();
    eig.eigenvectors.select_columns(cols.iter())
}

struct Ray<T: Scalar> {
    r: DVector<T>,
    zeros: Vec<u64>,
}

fn bit_set(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

fn bit_and(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn bit_count(a: &[u64]) -> usize {
    a.iter().map(|x| x.count_ones() as usize).sum()
}

fn bit_subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

/// Double description on a normalized, bounded, full-dimensional polytope.
fn double_description<T: Scalar>(p: &HPolytope<T>) -> Result<Vec<DVector<T>>, GeometryError> {
    let d = p.dim();
    let m = p.num_facets();
    let (center, _) = p.chebyshev(T::lit(1e6))?;
    let slack = &p.b - &p.a * &center;

    let rows = m + 1;
    let mut g = DMatrix::zeros(rows, d + 1);
    g[(0, 0)] = -T::one();
    for i in 0..m {
        g[(i + 1, 0)] = -slack[i];
        g.view_mut((i + 1, 1), (1, d)).copy_from(&p.a.row(i));
        let norm = g.row(i + 1).norm();
        g.row_mut(i + 1).scale_mut(T::one() / norm);
    }

    // Initial simplicial cone from d + 1 independent rows, t >= 0 first.
    let mut chosen: Vec<usize> = Vec::with_capacity(d + 1);
    let mut q: Vec<DVector<T>> = Vec::new();
    for i in 0..rows {
        let mut v = g.row(i).transpose();
        for u in &q {
            let proj = u.dot(&v);
            v -= u * proj;
        }
        let norm = v.norm();
        if norm > T::lit(1e-6) {
            q.push(v / norm);
            chosen.push(i);
            if chosen.len() == d + 1 {
                break;
            }
        }
    }
    if chosen.len() < d + 1 {
        return Err(GeometryError::UnboundedPolytope);
    }
    let g0 = g.select_rows(chosen.iter());
    let inv = g0.try_inverse().ok_or(GeometryError::UnboundedPolytope)?;
    let words = rows.div_ceil(64);
    let mut rays: Vec<Ray<T>> = Vec::new();
    for j in 0..=d {
        let r = -inv.column(j);
        let r = &r / r.norm();
        let mut zeros = vec![0u64; words];
        for (k, &row) in chosen.iter().enumerate() {
            if k != j {
                bit_set(&mut zeros, row);
            }
        }
        rays.push(Ray { r, zeros });
    }

    let eps = T::ipm_tol() * T::lit(10.0);
    let mut done = vec![false; rows];
    for &c in &chosen {
        done[c] = true;
    }
    for i in 0..rows {
        if done[i] {
            continue;
        }
        done[i] = true;
        let gi = g.row(i).transpose();
        let vals: Vec<T> = rays.iter().map(|ray| gi.dot(&ray.r)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&j| vals[j] > eps).collect();
        if pos.is_empty() {
            for (j, ray) in rays.iter_mut().enumerate() {
                if vals[j].abs() <= eps {
                    bit_set(&mut ray.zeros, i);
                }
            }
            continue;
        }
        let neg: Vec<usize> = (0..rays.len()).filter(|&j| vals[j] < -eps).collect();
        let mut fresh: Vec<Ray<T>> = Vec::new();
        for &a in &pos {
            for &b in &neg {
                let common = bit_and(&rays[a].zeros, &rays[b].zeros);
                if bit_count(&common) + 1 < d {
                    continue;
                }
                let adjacent = rays
                    .iter()
                    .enumerate()
                    .all(|(j, r)| j == a || j == b || !bit_subset(&common, &r.zeros));
                if !adjacent {
                    continue;
                }
                let r = &rays[b].r * vals[a] - &rays[a].r * vals[b];
                let norm = r.norm();
                if norm <= T::default_epsilon() {
                    continue;
                }
                let mut zeros = common;
                bit_set(&mut zeros, i);
                fresh.push(Ray { r: r / norm, zeros });
            }
        }
        let mut next: Vec<Ray<T>> = Vec::with_capacity(rays.len() + fresh.len());
        for (j, mut ray) in rays.into_iter().enumerate() {
            if vals[j] > eps {
                continue;
            }
            if vals[j].abs() <= eps {
                bit_set(&mut ray.zeros, i);
            }
            next.push(ray);
        }
        next.extend(fresh);
        rays = next;
    }

    let mut out: Vec<DVector<T>> = Vec::new();
    let tol = T::feas_tol();
    for ray in rays {
        let t = ray.r[0];
        if t <= eps {
            continue;
        }
        let v = &center + ray.r.rows(1, d) / t;
        let scale = T::one() + v.amax();
        if out.iter().all(|u| (u - &v).amax() > tol * scale) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(GeometryError::UnboundedPolytope);
    }
    Ok(out)
}
