use std::sync::OnceLock;

use atmpc_core::benchmark;
use atmpc_core::geometry::HPolytope;
use atmpc_core::tube_mpc::{
    check_tube, contraction_factors, control_input, solve_ocp, synth_cross_section,
    synth_terminal_set, TubeError,
};
use atmpc_core::{Tube, Vector};
use nalgebra::dvector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tube() -> &'static (Tube, f64) {
    static T: OnceLock<(Tube, f64)> = OnceLock::new();
    T.get_or_init(|| {
        let sys = benchmark::system();
        let k = benchmark::gain();
        let (x0, lam) = synth_cross_section(&sys, &k, 0.9, 100, &HPolytope::cube(2, 1.0)).unwrap();
        let xf = synth_terminal_set(&sys, &benchmark::constraints(), &k, &x0, 200).unwrap();
        let cfg = Tube::new(benchmark::HORIZON, k, benchmark::terminal_weight(), &x0, xf).unwrap();
        (cfg, lam)
    })
}

fn sample_hull(rng: &mut ChaCha8Rng, pts: &[Vector]) -> Vector {
    let w: Vec<f64> = pts.iter().map(|_| rng.gen::<f64>().powi(3)).collect();
    let s: f64 = w.iter().sum();
    pts.iter()
        .zip(&w)
        .fold(Vector::zeros(pts[0].len()), |acc, (p, wi)| {
            acc + p * (wi / s)
        })
}

#[test]
fn cross_section_is_contractive() {
    let sys = benchmark::system();
    let (cfg, lam) = tube();
    let thetas = sys.theta.vertices().unwrap();
    let factors = contraction_factors(&sys, &cfg.k, &cfg.h0, &cfg.x0_vertices, &thetas).unwrap();
    assert!(*lam < 1.0);
    assert!(factors.iter().all(|f| *f <= lam + 1e-9));
}

/// Sampled points of the terminal set map into it under every vertex and
/// their tubes satisfy the constraints with `u = K x`.
#[test]
fn terminal_set_successors() {
    let sys = benchmark::system();
    let zc = benchmark::constraints();
    let (cfg, _) = tube();
    let thetas = sys.theta.vertices().unwrap();
    let factors = contraction_factors(&sys, &cfg.k, &cfg.h0, &cfg.x0_vertices, &thetas).unwrap();
    let verts = cfg.xf.vertices().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..300 {
        let s = sample_hull(&mut rng, &verts);
        let z = s.rows(0, 2).into_owned();
        let alpha = s[2];
        assert!(alpha >= -1e-9);
        for (th, lam) in thetas.iter().zip(&factors) {
            let acl = sys.closed_loop(th, &cfg.k).unwrap();
            let mut succ = dvector![0.0, 0.0, 0.0];
            succ.rows_mut(0, 2).copy_from(&(&acl * &z));
            succ[2] = lam * alpha;
            assert!(cfg.xf.contains_point_tol(&succ, 1e-8));
        }
        for v in &cfg.x0_vertices {
            let x = &z + v * alpha;
            assert!(zc.in_constraints(&x, &(&cfg.k * &x)));
        }
    }
}

#[test]
fn benchmark_decision_is_sound_and_consistent() {
    let sys = benchmark::system();
    let zc = benchmark::constraints();
    let w = benchmark::weights();
    let (cfg, _) = tube();
    let x0 = benchmark::x0();
    let th = sys.theta.chebyshev(1.0).unwrap().0;
    let dec = solve_ocp(&sys, &zc, &w, cfg, &x0, &th, &sys.theta).unwrap();
    let thetas = sys.theta.vertices().unwrap();
    let check = check_tube(&sys, &zc, cfg, &dec, &thetas, &x0).unwrap();
    assert!(check.is_sound(1e-6), "{check:?}");
    assert!((dec.recomputed_value(cfg, &w.q, &w.r) - dec.value).abs() <= 1e-6 * dec.value);
    assert!(cfg.tube_excess(&x0, &dec.z[0], dec.alpha[0]) <= 1e-6);
    // The applied input respects the input limit.
    let u = control_input(cfg, &dec, &x0);
    assert!(u[0].abs() <= 6.0 + 1e-6);
}

#[test]
fn far_state_is_infeasible() {
    let sys = benchmark::system();
    let (cfg, _) = tube();
    let x = dvector![-300.0, -100.0];
    let r = solve_ocp(
        &sys,
        &benchmark::constraints(),
        &benchmark::weights(),
        cfg,
        &x,
        &benchmark::theta_star(),
        &sys.theta,
    );
    assert!(matches!(r, Err(TubeError::OcpInfeasible)), "{r:?}");
}
