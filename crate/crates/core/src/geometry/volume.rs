//! Volume by pyramid decomposition from an interior point over the facets,
//! recursing into each facet's hyperplane.

use nalgebra::DVector;

use super::vertices::complement;
use super::{GeometryError, HPolytope};
use crate::Scalar;

pub(super) fn volume<T: Scalar>(p: &HPolytope<T>) -> Result<T, GeometryError> {
    let d = p.dim();
    if d > 4 {
        return Err(GeometryError::DimensionTooHigh(d));
    }
    if d == 0 {
        return Ok(T::one());
    }
    let p = p.prune()?;
    p.check_bounded()?;
    if d == 1 {
        return Ok(interval_length(&p));
    }
    if p.affine_hull()?.dim() < d {
        return Ok(T::zero());
    }
    let (center, _) = p.chebyshev(T::lit(1e6))?;
    let dt = T::from_usize(d).unwrap();
    let mut total = T::zero();
    for i in 0..p.num_facets() {
        let normal = p.a.row(i).transpose();
        let height = p.b[i] - normal.dot(&center);
        let foot = &center + &normal * height;
        let basis = complement(&p.a.rows(i, 1).into_owned(), d);
        let others: Vec<usize> = (0..p.num_facets()).filter(|&j| j != i).collect();
        let a = p.a.select_rows(others.iter());
        let b = DVector::from_iterator(others.len(), others.iter().map(|&j| p.b[j]));
        let facet = HPolytope {
            a: &a * &basis,
            b: b - &a * &foot,
        };
        let area = match volume(&facet) {
            Ok(v) => v,
            Err(GeometryError::EmptyPolytope) => T::zero(),
            Err(e) => return Err(e),
        };
        total += height * area / dt;
    }
    Ok(total)
}

/// Length of `{s : a_j s <= b_j}`, computed directly from the ratios.
fn interval_length<T: Scalar>(p: &HPolytope<T>) -> T {
    let big = T::max_value().unwrap();
    let (mut lo, mut hi) = (-big, big);
    for j in 0..p.num_facets() {
        let a = p.a[(j, 0)];
        if a > T::zero() {
            hi = hi.min(p.b[j] / a);
        } else if a < T::zero() {
            lo = lo.max(p.b[j] / a);
        } else if p.b[j] < T::zero() {
            return T::zero();
        }
    }
    (hi - lo).max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn boxes_and_simplices() {
        let cube = HPolytope::<f64>::from_box(&DVector::zeros(3), &DVector::from_element(3, 0.75));
        assert!((cube.volume().unwrap() - 0.421875).abs() < 1e-12);
        assert!((HPolytope::<f64>::cube(2, 1.0).volume().unwrap() - 4.0).abs() < 1e-12);
        let a = dmatrix![-1.0, 0.0; 0.0, -1.0; 1.0, 1.0];
        let tri = HPolytope::<f64>::new(a, dvector![0.0, 0.0, 1.0]).unwrap();
        assert!((tri.volume().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flat_sets_have_zero_volume() {
        let band = dmatrix![1.0, 1.0; -1.0, -1.0];
        let p = HPolytope::from_box(&dvector![0.0, 0.0], &dvector![1.0, 1.0])
            .with_rows(&band, &dvector![1.0 + 1e-8, -1.0 + 1e-8]);
        assert_eq!(p.volume().unwrap(), 0.0);
    }

    #[test]
    fn five_dimensions_are_rejected() {
        let p = HPolytope::<f64>::cube(5, 1.0);
        assert_eq!(p.volume(), Err(GeometryError::DimensionTooHigh(5)));
    }
}
