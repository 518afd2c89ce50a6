//! Induced 2-norms.

use nalgebra::{DMatrix, DVector};

use super::{GeometryError, HPolytope};
use crate::Scalar;

/// Largest singular value, from the eigenvalues of `M'M`.
pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    let gram = m.transpose() * m;
    let top = gram.symmetric_eigenvalues().max();
    top.max(T::zero()).sqrt()
}

/// Maximum of `|M(theta)|` (or its square) over the vertices of `theta_set`.
/// For `M` affine in `theta` this is the maximum over the whole set, since
/// the norm of an affine family is convex.
pub fn max_norm_over_vertices<T, F>(
    family: F,
    theta_set: &HPolytope<T>,
    squared: bool,
) -> Result<T, GeometryError>
where
    T: Scalar,
    F: Fn(&DVector<T>) -> DMatrix<T>,
{
    let mut best = T::zero();
    for v in theta_set.vertices()? {
        let n = spectral_norm(&family(&v));
        best = best.max(if squared { n * n } else { n });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn diagonal_and_identity() {
        assert!((spectral_norm(&DMatrix::<f64>::identity(3, 3)) - 1.0).abs() < 1e-12);
        assert!((spectral_norm::<f64>(&dmatrix![3.0, 0.0; 0.0, -4.0]) - 4.0).abs() < 1e-12);
        assert!((spectral_norm::<f64>(&dmatrix![1.0, 2.0]) - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scalar_family_on_interval() {
        let theta = HPolytope::<f64>::from_box(&DVector::zeros(1), &DVector::from_element(1, 0.75));
        let m =
            max_norm_over_vertices(|t| DMatrix::from_element(1, 1, t[0]), &theta, false).unwrap();
        assert!((m - 0.75).abs() < 1e-9);
        let c = max_norm_over_vertices(|_| DMatrix::<f64>::identity(2, 2), &theta, true).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }
}
