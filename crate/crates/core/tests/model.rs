mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sphere4::model::{
    coherence, make_untf, sample_bg, spikiness, synth_odl, welch_bound, Dictionary, FilterBank, SparseCode, SpherePoint,
    UntfConfig,
};
use sphere4::rng;

#[test]
fn square_untf_is_orthogonal() {
    let (d, rep) = make_untf(4, 4, 3, UntfConfig::default()).unwrap();
    assert!(rep.converged);
    let gram = d.entries() * d.entries().transpose();
    assert!((gram - DMatrix::<f64>::identity(4, 4)).norm() < 1e-10);
}

#[test]
fn untf_3x4_respects_welch_floor_and_brute_force_coherence() {
    let (d, rep) = make_untf(3, 4, 11, UntfConfig::default()).unwrap();
    assert!(rep.converged);
    assert!((welch_bound(3, 4) - 1.0 / 3.0).abs() < 1e-15);
    let mu = d.coherence();
    assert!(mu >= 1.0 / 3.0 - 1e-9, "mu = {mu}");
    assert!((mu - common::coherence_naive(d.entries())).abs() < 1e-14);
}

#[test]
fn untf_16x48_converges_to_tolerance() {
    let (d, rep) = make_untf(16, 48, 1, UntfConfig::default()).unwrap();
    assert!(rep.converged, "{rep:?}");
    assert!(d.frame_residual() <= 1e-10);
    assert!(d.norm_residual() <= 1e-10);
}

#[test]
fn untf_residuals_and_welch_over_shapes() {
    for (n, m) in [(3, 6), (5, 12), (6, 30), (8, 64), (10, 30), (12, 24)] {
        let (d, rep) = make_untf(n, m, 5, UntfConfig::default()).unwrap();
        assert!(rep.converged, "n={n}, m={m}: {rep:?}");
        assert!(d.frame_residual() <= 1e-10 && d.norm_residual() <= 1e-10);
        assert!(d.coherence() >= welch_bound(n, m) - 1e-9);
        assert!(d.coherence() < 1.0);
    }
}

#[test]
fn untf_contract_violation() {
    assert!(make_untf(4, 3, 0, UntfConfig::default()).is_err());
}

#[test]
fn untf_non_convergence_is_flagged() {
    let cfg = UntfConfig { max_iters: 1, tol: 1e-300 };
    let (_, rep) = make_untf(5, 12, 0, cfg).unwrap();
    assert!(!rep.converged);
    assert!(rep.frame_residual.is_finite());
}

#[test]
fn coherence_edge_cases() {
    assert_eq!(coherence(&DMatrix::identity(3, 3)).unwrap(), 0.0);
    let a = DMatrix::from_column_slice(2, 3, &[1.0, 2.0, -2.0, -4.0, 0.0, 1.0]);
    assert!((coherence(&a).unwrap() - 1.0).abs() < 1e-15);
    assert!(Dictionary::new(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
}

#[test]
fn bg_tiny_theta_gives_exact_zeros() {
    let x = sample_bg(10, 10, 1e-12, 0).unwrap();
    assert!(x.entries().iter().all(|v| *v == 0.0));
}

#[test]
fn bg_near_one_is_dense() {
    let x = sample_bg(10, 10, 1.0 - 1e-12, 0).unwrap();
    assert!(x.nonzero_fraction() > 0.99);
    assert!(sample_bg(10, 10, 1.0, 0).is_err());
    assert!(sample_bg(10, 10, 0.0, 0).is_err());
}

#[test]
fn bg_density_within_binomial_band() {
    let (m, p, theta) = (100, 10_000, 0.1);
    let x = sample_bg(m, p, theta, 7).unwrap();
    let se = (theta * (1.0 - theta) / (m * p) as f64).sqrt();
    assert!((x.nonzero_fraction() - theta).abs() <= 3.0 * se);
}

#[test]
fn bg_is_reproducible() {
    let a = sample_bg(20, 30, 0.2, 9).unwrap();
    let b = sample_bg(20, 30, 0.2, 9).unwrap();
    let bits = |x: &SparseCode| x.entries().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&sample_bg(20, 30, 0.2, 10).unwrap()));
}

#[test]
fn spikiness_examples() {
    let mut z = vec![0.1; 6];
    z[0] = 1.0;
    assert!((spikiness(&z).unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(spikiness(&[1.0, 1.0]).unwrap(), 1.0);
    assert!((spikiness(&[0.9, -0.3, 0.05]).unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(spikiness(&[2.0, 0.0, 0.0]).unwrap(), f64::INFINITY);
    assert!(spikiness(&[1.0]).is_err());
}

#[test]
fn synth_examples() {
    let (d, _) = make_untf(3, 4, 2, UntfConfig::default()).unwrap();
    let zero = sample_bg(4, 5, 1e-12, 0).unwrap();
    assert!(synth_odl(&d, &zero).unwrap().entries().iter().all(|v| *v == 0.0));

    let x = sample_bg(4, 5, 0.5, 3).unwrap();
    let y = synth_odl(&d, &x).unwrap();
    let oracle = common::matmul(d.entries(), x.entries());
    assert!((y.entries() - oracle).amax() <= 1e-14);
}

#[test]
fn synth_single_spike_selects_column() {
    let (d, _) = make_untf(3, 4, 2, UntfConfig::default()).unwrap();
    let spike = DMatrix::from_fn(4, 3, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
    let y = synth_odl(&d, &SparseCode::new(spike, 0.1).unwrap()).unwrap();
    assert_eq!(y.entries().column(0), d.entries().column(0));
    assert!(y.entries().columns(1, 2).iter().all(|v| *v == 0.0));
}

#[test]
fn synth_shape_mismatch() {
    let d = Dictionary::identity(3);
    let x = sample_bg(4, 2, 0.5, 0).unwrap();
    assert!(synth_odl(&d, &x).is_err());
}

#[test]
fn filter_bank_kappa_matches_dense_svd() {
    let fb = FilterBank::random_sphere(8, 3, 4).unwrap();
    let sv = fb.stacked_circulant().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    assert!((fb.kappa() - smax / smin).abs() < 1e-10 * fb.kappa());
    assert!((fb.sigma_min() - smin).abs() < 1e-12);
    assert!(fb.kappa() >= 1.0);
}

#[test]
fn sphere_point_projection_and_random_draws() {
    let q = SpherePoint::from_slice(&[3.0, 4.0]).unwrap();
    assert!((q.coords().norm() - 1.0).abs() < 1e-15);
    assert!(SpherePoint::from_slice(&[0.0, 0.0]).is_err());
    for t in 0..20 {
        let r = SpherePoint::random(7, 1, t);
        assert!((r.coords().norm() - 1.0).abs() <= 1e-12);
    }
    assert_eq!(SpherePoint::random(5, 1, 2), SpherePoint::random(5, 1, 2));
}

proptest! {
    #[test]
    fn spikiness_invariant_under_sign_and_permutation(
        v in proptest::collection::vec(-10.0f64..10.0, 2..12),
        flips in proptest::collection::vec(any::<bool>(), 12),
        rot in 0usize..12,
    ) {
        let base = spikiness(&v).unwrap();
        let mut w: Vec<f64> = v.iter().zip(&flips).map(|(x, f)| if *f { -x } else { *x }).collect();
        let len = w.len();
        w.rotate_left(rot % len);
        let other = spikiness(&w).unwrap();
        prop_assert!(base == other || (base - other).abs() <= 1e-12 * base);
        prop_assert!(base >= 1.0);
    }

    #[test]
    fn projected_points_are_unit(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
        let q = SpherePoint::project(DVector::from_vec(v)).unwrap();
        prop_assert!((q.coords().norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gaussian_sphere_draws_are_unit(seed in any::<u64>(), n in 1usize..50) {
        let mut r = rng::stream(seed, 0, rng::Purpose::Init);
        prop_assert!((rng::uniform_sphere(&mut r, n).norm() - 1.0).abs() <= 1e-12);
    }
}
