use atmpc_core::benchmark;
use atmpc_core::certify::{spectral_radius, verify_p, verify_robust_stability, Verdict};
use atmpc_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn min_eig(m: &Matrix) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// The robust certificate is a vertex check. Sampling the parameter box
/// must never contradict it.
#[test]
fn robust_certificate_holds_on_samples() {
    let sys = benchmark::system();
    let (k, p) = (benchmark::gain(), benchmark::terminal_weight());
    let cert = verify_robust_stability(&sys, &k, &p, &sys.theta).unwrap();
    assert_eq!(cert.verdict(), Verdict::Pass);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let th = nalgebra::DVector::from_fn(3, |_, _| rng.gen_range(0.0..=0.75));
        let acl = sys.closed_loop(&th, &k).unwrap();
        let decrease = &p - acl.transpose() * &p * &acl;
        assert!(min_eig(&decrease) > 0.0);
        assert!(spectral_radius(&acl) < 1.0);
    }
}

/// A direct evaluation of `P - A_cl' P A_cl - Q - K'RK` at the vertices
/// agrees in sign with the vertex certificate.
#[test]
fn terminal_weight_certificate_matches_direct_form() {
    let sys = benchmark::system();
    let (k, p) = (benchmark::gain(), benchmark::terminal_weight());
    let w = benchmark::weights();
    let cert = verify_p(&sys, &k, &p, &w.q, &w.r, &sys.theta).unwrap();
    let mut direct_min = f64::INFINITY;
    for v in sys.theta.vertices().unwrap() {
        let acl = sys.closed_loop(&v, &k).unwrap();
        let m = &p - acl.transpose() * &p * &acl - &w.q - k.transpose() * &w.r * &k;
        direct_min = direct_min.min(min_eig(&m));
    }
    assert_eq!(cert.min_eigenvalue < 0.0, direct_min < 0.0);
}

/// Scaling a robustly decreasing weight eventually dominates the stage cost.
#[test]
fn scaled_weight_passes() {
    let sys = benchmark::system();
    let k = benchmark::gain();
    let w = benchmark::weights();
    let p = benchmark::terminal_weight() * 10.0;
    let cert = verify_p(&sys, &k, &p, &w.q, &w.r, &sys.theta).unwrap();
    assert_eq!(cert.verdict(), Verdict::Pass);
}
