use atmpc_core::benchmark;
use atmpc_core::estimator::{
    compute_mu, delta_set, point_update, regressor_bound, update, EstimatorOptions,
};
use atmpc_core::geometry::spectral_norm;
use atmpc_core::{Estimator, Vector};
use nalgebra::{DVector, Dyn, OMatrix, U1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random convex combination of the given points.
fn sample_hull(rng: &mut ChaCha8Rng, pts: &[Vector]) -> Vector {
    let w: Vec<f64> = pts.iter().map(|_| rng.gen::<f64>().powi(4)).collect();
    let s: f64 = w.iter().sum();
    pts.iter()
        .zip(&w)
        .fold(Vector::zeros(pts[0].len()), |acc, (p, wi)| {
            acc + p * (wi / s)
        })
}

fn split(v: &Vector) -> (Vector, Vector) {
    (v.rows(0, 2).into_owned(), v.rows(2, 1).into_owned())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dynamics_are_affine_in_theta(
        th in prop::collection::vec(-1.0f64..1.0, 3),
        x in prop::collection::vec(-5.0f64..5.0, 2),
        u in -6.0f64..6.0,
    ) {
        let sys = benchmark::system();
        let (th, x) = (DVector::from_vec(th), DVector::from_vec(x));
        let u = OMatrix::<f64, Dyn, U1>::from_element(1, u);
        let next = sys.step(&th, &x, &u).unwrap();
        let via = sys.nominal_part(&x, &u) + sys.regressor(&x, &u).unwrap() * &th;
        prop_assert!((next - via).amax() < 1e-12);
    }
}

#[test]
fn step_size_bounds_every_sampled_regressor() {
    let sys = benchmark::system();
    let zc = benchmark::constraints();
    let mu = compute_mu(&sys, &zc, 1.0).unwrap();
    let verts = zc.polytope().vertices().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let (x, u) = split(&sample_hull(&mut rng, &verts));
        assert!(zc.in_constraints(&x, &u));
        let n = spectral_norm(&sys.regressor(&x, &u).unwrap());
        worst = worst.max(mu * n * n);
    }
    assert!(worst <= 1.0 + 1e-12, "mu |D|^2 reached {worst}");
    // The vertex maximum is attained, so sampling approaches it.
    assert!(worst > 0.5);
    assert!((regressor_bound(&sys, &zc).unwrap() * mu - 1.0).abs() < 1e-12);
}

/// Squared one-step prediction errors of the projected gradient estimator,
/// summed along random admissible sequences, stay below
/// `|theta* - theta_hat_0|^2 / mu`.
#[test]
fn prediction_error_sum_monte_carlo() {
    let sys = benchmark::system();
    let zc = benchmark::constraints();
    let theta0 = benchmark::theta_set();
    let mu = compute_mu(&sys, &zc, 1.0).unwrap();
    let verts = zc.polytope().vertices().unwrap();
    let tv = theta0.vertices().unwrap();
    let opts = EstimatorOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..40 {
        let star = sample_hull(&mut rng, &tv);
        let hat = sample_hull(&mut rng, &tv);
        let bound = (&star - &hat).norm_squared() / mu;
        let mut est = Estimator::new(hat, theta0.clone(), mu);
        for _ in 0..50 {
            let (x, u) = split(&sample_hull(&mut rng, &verts));
            let next = sys.step(&star, &x, &u).unwrap();
            est = point_update(&est, &sys, &x, &u, &next, &theta0, &opts).unwrap();
            assert!(est.cumulative_sq_error <= bound * (1.0 + 1e-9) + 1e-12);
            assert!(theta0.contains_point(&est.theta_hat));
        }
    }
}

#[test]
fn membership_sets_keep_the_truth_and_shrink() {
    let sys = benchmark::system();
    let zc = benchmark::constraints();
    let theta0 = benchmark::theta_set();
    let star = benchmark::theta_star();
    let mu = compute_mu(&sys, &zc, 1.0).unwrap();
    let verts = zc.polytope().vertices().unwrap();
    let opts = EstimatorOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut est = Estimator::new(theta0.chebyshev(1.0).unwrap().0, theta0.clone(), mu);
    let mut prev = theta0.volume().unwrap();
    for _ in 0..3 {
        let (x, u) = split(&sample_hull(&mut rng, &verts));
        let next = sys.step(&star, &x, &u).unwrap();
        let (dm, d) = delta_set(&sys, &x, &u, &next).unwrap();
        assert!((&dm * &star - &d).amax() < 1e-12);
        let after = update(&est, &sys, &x, &u, &next, &theta0, &opts).unwrap();
        assert!(est.set.contains(&after.set).unwrap());
        assert!(after.set.contains_point_tol(&star, 1e-9));
        let vol = after.set.volume().unwrap();
        assert!(vol <= prev);
        prev = vol;
        est = after;
    }
    // Two state equations per step pin three parameters after two steps.
    assert!(prev < 1e-6);
}
