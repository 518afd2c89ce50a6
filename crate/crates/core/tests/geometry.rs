use atmpc_core::geometry::HPolytope;
use atmpc_core::qp::solve_lp;
use atmpc_core::{Matrix, Vector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cube `[-1, 1]^d` cut by `extra` random halfspaces that keep the origin
/// strictly inside.
fn random_polytope(rng: &mut ChaCha8Rng, d: usize, extra: usize) -> HPolytope<f64> {
    let cube = HPolytope::cube(d, 1.0);
    let a = DMatrix::from_fn(extra, d, |_, _| rng.gen_range(-1.0..1.0));
    let b = DVector::from_fn(extra, |_, _| rng.gen_range(0.3..1.2));
    cube.with_rows(&a, &b)
}

fn brute_vertices(p: &HPolytope<f64>) -> Vec<Vector> {
    let (m, d) = (p.a.nrows(), p.a.ncols());
    let mut out: Vec<Vector> = Vec::new();
    for mask in 0u64..(1 << m) {
        if mask.count_ones() as usize != d {
            continue;
        }
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let sub = p.a.select_rows(idx.iter());
        let rhs = DVector::from_iterator(d, idx.iter().map(|&i| p.b[i]));
        let Some(x) = sub.lu().solve(&rhs) else {
            continue;
        };
        if p.violation(&x) <= 1e-9 && !out.iter().any(|y| (y - &x).amax() < 1e-8) {
            out.push(x);
        }
    }
    out
}

fn same_points(a: &[Vector], b: &[Vector]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.iter().any(|y| (x - y).amax() < 1e-7))
}

#[test]
fn vertices_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 2..=3 {
        for _ in 0..15 {
            let p = random_polytope(&mut rng, d, 4);
            let v = p.vertices().unwrap();
            assert!(same_points(&v, &brute_vertices(&p)), "d = {d}");
        }
    }
}

#[test]
fn support_matches_vertex_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let d = rng.gen_range(2..=3);
        let p = random_polytope(&mut rng, d, 3);
        let c = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let by_vertices = p
            .vertices()
            .unwrap()
            .iter()
            .map(|v| c.dot(v))
            .fold(f64::MIN, f64::max);
        let lp = solve_lp(&-&c, &p.a, &p.b, &Matrix::zeros(0, d), &Vector::zeros(0)).unwrap();
        assert!((p.support(&c).unwrap() - by_vertices).abs() < 1e-7);
        assert!((-lp.objective - by_vertices).abs() < 1e-7);
    }
}

#[test]
fn simplex_volume_is_determinant_over_factorial() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 1..=4 {
        for _ in 0..5 {
            // Image of the standard simplex under a random invertible map.
            let m = loop {
                let m: Matrix = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
                if m.determinant().abs() > 0.1 {
                    break m;
                }
            };
            let minv = m.clone().try_inverse().unwrap();
            let mut a = DMatrix::zeros(d + 1, d);
            let mut b = DVector::zeros(d + 1);
            a.rows_mut(0, d).copy_from(&(-&minv));
            a.row_mut(d)
                .copy_from(&(DMatrix::from_element(1, d, 1.0) * &minv));
            b[d] = 1.0;
            let p = HPolytope::new(a, b).unwrap();
            let factorial: f64 = (1..=d).map(|i| i as f64).product();
            let exact = m.determinant().abs() / factorial;
            let vol = p.volume().unwrap();
            assert!(
                (vol - exact).abs() <= 1e-9 * exact,
                "d = {d}: {vol} vs {exact}"
            );
        }
    }
}

#[test]
fn flat_sets_have_zero_volume() {
    let p = HPolytope::from_box(
        &DVector::from_vec(vec![0.0, 0.5]),
        &DVector::from_vec(vec![1.0, 0.5]),
    );
    assert_eq!(p.volume().unwrap(), 0.0);
    assert_eq!(p.affine_hull().unwrap().dim(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn box_scaling_and_translation(
        lo in prop::collection::vec(-2.0f64..0.0, 2),
        w in prop::collection::vec(0.1f64..2.0, 2),
        s in 0.1f64..3.0,
        t in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let lo = DVector::from_vec(lo);
        let hi = &lo + DVector::from_vec(w.clone());
        let bx = HPolytope::from_box(&lo, &hi);
        let vol = bx.volume().unwrap();
        prop_assert!((vol - w[0] * w[1]).abs() < 1e-9);
        let moved = bx.translated(&DVector::from_vec(t));
        prop_assert!((moved.volume().unwrap() - vol).abs() < 1e-9);
        if lo.iter().all(|v| *v < 0.0) && hi.iter().all(|v| *v > 0.0) {
            let scaled = bx.scaled(s);
            prop_assert!((scaled.volume().unwrap() - s * s * vol).abs() < 1e-8);
            prop_assert_eq!(bx.contains(&scaled).unwrap(), s <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn intersection_is_contained_in_both(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_polytope(&mut rng, 2, 2);
        let b = random_polytope(&mut rng, 2, 2);
        let c = a.intersect(&b).unwrap();
        prop_assert!(a.contains(&c).unwrap());
        prop_assert!(b.contains(&c).unwrap());
        let pruned = c.prune().unwrap();
        prop_assert!(pruned.set_eq(&c).unwrap());
    }
}
