//! Offline synthesis of the cross-section `X0` and the terminal set.

use nalgebra::{DMatrix, DVector};

use super::{normalize_cross_section, TubeError};
use crate::geometry::HPolytope;
use crate::model::{AffineParamSystem, ConstraintSet};
use crate::Scalar;

/// `lambda(theta^i) = max_{r, j} H0_r A_cl(theta^i) v^j` for each vertex
/// `theta^i` of `theta_vertices`, where `v^j` are the vertices of `X0`.
pub fn contraction_factors<T: Scalar>(
    sys: &AffineParamSystem<T>,
    k: &DMatrix<T>,
    h0: &DMatrix<T>,
    x0_vertices: &[DVector<T>],
    theta_vertices: &[DVector<T>],
) -> Result<Vec<T>, TubeError> {
    theta_vertices
        .iter()
        .map(|th| {
            let ha = h0 * sys.closed_loop(th, k)?;
            Ok(x0_vertices
                .iter()
                .map(|v| (&ha * v).max())
                .fold(T::min_value().unwrap(), |a, b| a.max(b)))
        })
        .collect()
}

fn interior_radius<T: Scalar>(p: &HPolytope<T>) -> Result<T, TubeError> {
    Ok(p.chebyshev(T::lit(1e6))?.1)
}

/// Largest `lambda_target`-contractive subset of `seed` under every vertex
/// closed loop, by iterating `Omega <- Omega & Pre_lambda(Omega)` until the
/// set stops shrinking. Returns the set and its achieved contraction factor.
pub fn synth_cross_section<T: Scalar>(
    sys: &AffineParamSystem<T>,
    k: &DMatrix<T>,
    lambda_target: T,
    max_iter: usize,
    seed: &HPolytope<T>,
) -> Result<(HPolytope<T>, T), TubeError> {
    let thetas = sys.theta.vertices()?;
    let acls = thetas
        .iter()
        .map(|th| sys.closed_loop(th, k))
        .collect::<Result<Vec<_>, _>>()?;
    let r0 = interior_radius(seed)?;
    let mut omega = seed.prune()?;
    for _ in 0..max_iter {
        let rows = omega.num_facets();
        let mut a = DMatrix::zeros(rows * acls.len(), omega.dim());
        let mut b = DVector::zeros(rows * acls.len());
        for (i, acl) in acls.iter().enumerate() {
            a.rows_mut(i * rows, rows).copy_from(&(&omega.a * acl));
            b.rows_mut(i * rows, rows)
                .copy_from(&(&omega.b * lambda_target));
        }
        let next = omega.with_rows(&a, &b).prune()?;
        if interior_radius(&next)? <= T::lit(1e-6) * r0 {
            return Err(TubeError::SynthesisFailed(format!(
                "no {lambda_target}-contractive set inside the seed"
            )));
        }
        if next.contains(&omega)? {
            let h0 = normalize_cross_section(&next)?;
            let verts = next.vertices()?;
            let lambda = contraction_factors(sys, k, &h0, &verts, &thetas)?
                .into_iter()
                .fold(T::zero(), |a, b| a.max(b));
            return Ok((next, lambda));
        }
        omega = next;
    }
    Err(TubeError::SynthesisFailed(format!(
        "cross-section did not converge in {max_iter} iterations"
    )))
}

/// Terminal set over `(z, alpha)`.
///
/// Starts from the admissible pairs (every point of `{z} + alpha X0` meets
/// the constraints under `u = K x`, `alpha >= 0`) and shrinks until the set
/// is invariant under `(z, alpha) -> (A_cl(theta^i) z, lambda_i alpha)` for
/// every vertex. The rows `H0_r A_cl(theta^i) z + lambda_max alpha <= a_max`
/// are added as well: they make the set also invariant under
/// `(z, alpha) -> (0, max_{i,r} H0_r A_cl(theta^i) z + lambda_max alpha)`,
/// a single successor tube that holds for the whole parameter set at once.
pub fn synth_terminal_set<T: Scalar>(
    sys: &AffineParamSystem<T>,
    constraints: &ConstraintSet<T>,
    k: &DMatrix<T>,
    x0: &HPolytope<T>,
    max_iter: usize,
) -> Result<HPolytope<T>, TubeError> {
    let n = sys.n();
    let h0 = normalize_cross_section(x0)?;
    let x0_vertices = x0.vertices()?;
    let thetas = sys.theta.vertices()?;
    let acls = thetas
        .iter()
        .map(|th| sys.closed_loop(th, k))
        .collect::<Result<Vec<_>, _>>()?;
    let lambdas = contraction_factors(sys, k, &h0, &x0_vertices, &thetas)?;
    let lambda_max = lambdas.iter().fold(T::zero(), |a, &b| a.max(b));
    if lambda_max >= T::one() {
        return Err(TubeError::SynthesisFailed(format!(
            "cross-section is not contractive (lambda = {lambda_max})"
        )));
    }

    let fk = &constraints.f + &constraints.g * k;
    let nf = fk.nrows();
    let nh = h0.nrows();
    let depth: Vec<T> = (0..nf)
        .map(|r| {
            x0_vertices
                .iter()
                .map(|v| fk.row(r).dot(&v.transpose()))
                .fold(T::min_value().unwrap(), |a, b| a.max(b))
        })
        .collect();
    let worst = depth.iter().fold(T::zero(), |a, &b| a.max(b));
    if worst <= T::zero() {
        return Err(TubeError::SynthesisFailed(
            "constraints do not bound the tube scale".into(),
        ));
    }
    let a_max = T::one() / worst;

    let rows = nf + 1 + nh * acls.len();
    let mut a = DMatrix::zeros(rows, n + 1);
    let mut b = DVector::zeros(rows);
    for r in 0..nf {
        a.view_mut((r, 0), (1, n)).copy_from(&fk.row(r));
        a[(r, n)] = depth[r];
        b[r] = T::one();
    }
    a[(nf, n)] = -T::one();
    for (i, acl) in acls.iter().enumerate() {
        let ha = &h0 * acl;
        for r in 0..nh {
            let row = nf + 1 + i * nh + r;
            a.view_mut((row, 0), (1, n)).copy_from(&ha.row(r));
            a[(row, n)] = lambda_max;
            b[row] = a_max;
        }
    }
    let mut set = HPolytope::new(a, b)?.prune()?;
    let r0 = interior_radius(&set)?;

    for _ in 0..max_iter {
        let rows = set.num_facets();
        let mut a = DMatrix::zeros(rows * acls.len(), n + 1);
        let mut b = DVector::zeros(rows * acls.len());
        for (i, acl) in acls.iter().enumerate() {
            let mut map = DMatrix::zeros(n + 1, n + 1);
            map.view_mut((0, 0), (n, n)).copy_from(acl);
            map[(n, n)] = lambdas[i];
            a.rows_mut(i * rows, rows).copy_from(&(&set.a * map));
            b.rows_mut(i * rows, rows).copy_from(&set.b);
        }
        let next = set.with_rows(&a, &b).prune()?;
        if interior_radius(&next)? <= T::lit(1e-6) * r0 {
            return Err(TubeError::SynthesisFailed(
                "terminal set collapsed to measure zero".into(),
            ));
        }
        if next.contains(&set)? {
            return Ok(next);
        }
        set = next;
    }
    Err(TubeError::SynthesisFailed(format!(
        "terminal set did not converge in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn scalar_system() -> AffineParamSystem<f64> {
        // x+ = (0.2 + 0.6 theta) x + u, theta in [0, 1], K = 0.
        AffineParamSystem::new(
            vec![dmatrix![0.2], dmatrix![0.6]],
            vec![dmatrix![1.0], dmatrix![0.0]],
            HPolytope::from_box(&dvector![0.0], &dvector![1.0]),
        )
        .unwrap()
    }

    #[test]
    fn scalar_cross_section_is_the_seed() {
        let sys = scalar_system();
        let k = dmatrix![0.0];
        let seed = HPolytope::cube(1, 1.0);
        let (x0, lambda) = synth_cross_section(&sys, &k, 0.9, 50, &seed).unwrap();
        assert!(x0.set_eq(&seed).unwrap());
        assert!((lambda - 0.8).abs() < 1e-9);
    }

    #[test]
    fn unstable_family_has_no_cross_section() {
        let sys = AffineParamSystem::new(
            vec![dmatrix![1.2], dmatrix![0.0]],
            vec![dmatrix![1.0], dmatrix![0.0]],
            HPolytope::from_box(&dvector![0.0], &dvector![1.0]),
        )
        .unwrap();
        let r = synth_cross_section(&sys, &dmatrix![0.0], 0.9, 50, &HPolytope::cube(1, 1.0));
        assert!(matches!(r, Err(TubeError::SynthesisFailed(_))));
    }

    #[test]
    fn scalar_terminal_set() {
        let sys = scalar_system();
        let k = dmatrix![0.0];
        // |x| <= 2, |u| <= 1.
        let zc = ConstraintSet::new(dmatrix![0.5; -0.5; 0.0; 0.0], dmatrix![0.0; 0.0; 1.0; -1.0])
            .unwrap();
        let x0 = HPolytope::cube(1, 1.0);
        let xf = synth_terminal_set(&sys, &zc, &k, &x0, 200).unwrap();
        // Admissibility alone gives |z| + alpha <= 2; the common successor
        // rows give 0.8 |z| + 0.8 alpha <= 2, which is implied.
        for (z, a, inside) in [
            (0.0, 2.0, true),
            (1.0, 1.0, true),
            (-1.5, 0.5, true),
            (0.0, 2.1, false),
            (1.0, -0.1, false),
        ] {
            assert_eq!(
                xf.contains_point_tol(&dvector![z, a], 1e-7),
                inside,
                "{z} {a}"
            );
        }
    }
}
