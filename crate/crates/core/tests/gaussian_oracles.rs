//! Gaussian toolbox against brute-force oracles written independently of the
//! library routines.

use nalgebra::Matrix4;
use proptest::prelude::*;
use rand::Rng;
use sqzrx::gaussian::{
    self, build_purification, condition_on_homodyne, g, ops, purification_from_source, reduce, round_trip_ok,
    symplectic_eigenvalues, von_neumann_entropy, ArmModel, CovMatrix4, DetectorModel, GaussianError, Mat,
    PurificationInput, Quadrature, SourceFit,
};
use sqzrx::qkd::documented_setup;
use sqzrx::seed;

mod common;
use common::*;

const INSTANCES: usize = 1000;

fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax()
}

#[test]
fn symplectic_eigenvalues_match_construction_and_complex_spectrum() {
    let mut rng = seed::rng(seed::derive(11, "oracle", 0));
    for i in 0..INSTANCES {
        let n = 1 + i % 4;
        let (cov, truth) = random_state(n, &mut rng);
        let got = symplectic_eigenvalues(&cov).unwrap();
        let brute = nu_via_complex_eigenvalues(&cov);
        for k in 0..n {
            assert!((got[k] - truth[k]).abs() < 1e-8, "instance {i}: {got:?} vs {truth:?}");
            assert!((got[k] - brute[k]).abs() < 1e-8, "instance {i}: {got:?} vs {brute:?}");
        }
    }
}

#[test]
fn entropies_match_photon_number_series() {
    let mut rng = seed::rng(seed::derive(11, "oracle", 1));
    for i in 0..INSTANCES {
        let n = 1 + i % 3;
        let (cov, nu) = random_state(n, &mut rng);
        let series: f64 = nu.iter().map(|&v| thermal_entropy_series(v)).sum();
        let s = von_neumann_entropy(&cov).unwrap();
        assert!((s - series).abs() < 1e-8, "instance {i}: {s} vs {series}");
    }
    assert!((g(3.0) - 2.0).abs() < 1e-14);
    let near = g(1.0 + 1e-12);
    assert!(near.is_finite() && (0.0..1e-9).contains(&near));
}

#[test]
fn conditioning_matches_epsilon_limit() {
    let mut rng = seed::rng(seed::derive(11, "oracle", 2));
    for i in 0..INSTANCES {
        let n = 2 + i % 2;
        let (cov, _) = random_state(n, &mut rng);
        let mode = rng.gen_range(0..n);
        let q = if i % 2 == 0 { Quadrature::X } else { Quadrature::P };
        let a = condition_on_homodyne(&cov, mode, q);
        let b = condition_eps_limit(&cov, mode, q, 1e-13);
        let scale = cov.amax().max(1.0);
        assert!(max_abs_diff(&a, &b) < 1e-8 * scale, "instance {i}: {}", max_abs_diff(&a, &b));
    }
}

#[test]
fn conditioning_commutes_with_partial_trace_and_itself() {
    let mut rng = seed::rng(seed::derive(11, "oracle", 3));
    for i in 0..INSTANCES {
        let (cov, _) = random_state(3, &mut rng);
        // measure mode 0, keep mode 1: trace mode 2 before or after
        let after = reduce(&condition_on_homodyne(&cov, 0, Quadrature::X), &[0]);
        let before = condition_on_homodyne(&reduce(&cov, &[0, 1]), 0, Quadrature::X);
        assert!(max_abs_diff(&after, &before) < 1e-8 * cov.amax(), "instance {i}");
        // X on mode 0 and P on mode 1, in either order
        let xp = condition_on_homodyne(&condition_on_homodyne(&cov, 0, Quadrature::X), 0, Quadrature::P);
        let px = condition_on_homodyne(&condition_on_homodyne(&cov, 1, Quadrature::P), 0, Quadrature::X);
        assert!(max_abs_diff(&xp, &px) < 1e-8 * cov.amax(), "instance {i}");
    }
}

#[test]
fn product_state_conditioning_leaves_remote_block() {
    let cov = ops::direct_sum(&ops::squeezed(0.3), &ops::thermal(2.5));
    let c = condition_on_homodyne(&cov, 0, Quadrature::P);
    assert!(max_abs_diff(&c, &ops::thermal(2.5)) < 1e-15);
}

#[test]
fn two_mode_squeezed_reference_cases() {
    let r: f64 = 0.5;
    let nu = symplectic_eigenvalues(&ops::tmsv((2.0 * r).cosh())).unwrap();
    assert!(nu.iter().all(|v| (v - 1.0).abs() < 1e-10));
    // information gained about a lossy remote mode grows with squeezing
    let mut last = 0.0;
    for k in 1..8 {
        let v = (2.0 * 0.3 * k as f64).cosh();
        let s = von_neumann_entropy(&condition_on_homodyne(&ops::tmsv(v), 0, Quadrature::X)).unwrap();
        // conditioned variances 1/v and v: pure
        assert!(s.abs() < 1e-9);
        let with_loss = ops::apply(&ops::beamsplitter(3, 1, 2, 0.7), &ops::direct_sum(&ops::tmsv(v), &ops::vacuum(1)));
        let cond = von_neumann_entropy(&reduce(&condition_on_homodyne(&with_loss, 0, Quadrature::X), &[0])).unwrap();
        let (a, b) = (0.7 / v + 0.3, 0.7 * v + 0.3);
        assert!((cond - g((a * b).sqrt())).abs() < 1e-9);
        let gain = von_neumann_entropy(&reduce(&with_loss, &[1])).unwrap() - cond;
        assert!(gain > last);
        last = gain;
    }
}

#[test]
fn sub_vacuum_state_is_non_physical() {
    let bad = Mat::identity(2, 2) * 0.9;
    assert!(matches!(symplectic_eigenvalues(&bad), Err(GaussianError::NonPhysical(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accepted_states_respect_the_uncertainty_bound(seed_v in any::<u64>(), n in 1usize..4, shrink in 0.5f64..1.2) {
        let mut rng = seed::rng(seed_v);
        let (cov, _) = random_state(n, &mut rng);
        let scaled = &cov * shrink;
        if let Ok(nu) = symplectic_eigenvalues(&scaled) {
            prop_assert!(nu.iter().all(|&v| v >= 1.0 - 1e-6));
        }
    }

    #[test]
    fn entropy_is_non_negative(seed_v in any::<u64>(), n in 1usize..4) {
        let mut rng = seed::rng(seed_v);
        let (cov, _) = random_state(n, &mut rng);
        prop_assert!(von_neumann_entropy(&cov).unwrap() >= 0.0);
    }
}

fn arm(loss_db: f64, eff: f64, el: f64) -> ArmModel {
    ArmModel { loss_db, excess_noise: 0.0, fit_excess: false, detector: DetectorModel { efficiency: eff, electronic: el } }
}

fn within_one_percent(model: &Matrix4<f64>, meas: &Matrix4<f64>) -> bool {
    (0..4).all(|i| {
        (0..4).all(|j| {
            let m = meas[(i, j)].abs();
            m < 1e-3 || (model[(i, j)].abs() - m).abs() <= 0.01 * m
        })
    })
}

#[test]
fn published_covariance_round_trips_through_purification() {
    let meas = CovMatrix4::published();
    let st = build_purification(&meas, &documented_setup()).unwrap();
    assert!(round_trip_ok(&st.reduced_outcome(), &meas));
    assert!(st.max_symplectic_deviation() < 1e-9);
    let lab = gaussian::lab_modes(&st);
    assert!(symplectic_eigenvalues(&lab).is_ok());
}

#[test]
fn random_sources_round_trip_through_purification() {
    let mut rng = seed::rng(seed::derive(11, "oracle", 4));
    for i in 0..200 {
        let v_sq = rng.gen_range(0.3..0.95);
        let v_asq = rng.gen_range(1.0 / v_sq + 0.05..12.0);
        let input = PurificationInput {
            arms: [
                arm(rng.gen_range(0.0..1.0), rng.gen_range(0.8..0.98), rng.gen_range(0.0..0.15)),
                arm(rng.gen_range(0.0..3.0), rng.gen_range(0.8..0.98), rng.gen_range(0.0..0.15)),
            ],
            source_untrusted_fraction: rng.gen_range(0.0..1.0),
        };
        let truth = SourceFit { v_sq, v_asq, excess: [0.0; 2], max_rel_error: 0.0 };
        let st = purification_from_source(truth, &input).unwrap();
        assert!(st.max_symplectic_deviation() < 1e-9, "instance {i}: {} {v_sq} {v_asq} {input:?}", st.max_symplectic_deviation());
        let meas = CovMatrix4::new(st.reduced_outcome(), Matrix4::from_element(f64::NAN), 2_400_000).unwrap();
        let rebuilt = build_purification(&meas, &input).unwrap();
        assert!(
            within_one_percent(&rebuilt.reduced_outcome(), &meas.entries),
            "instance {i}: {:?} {}\n{}\n{}",
            input,
            rebuilt.fit.max_rel_error,
            rebuilt.reduced_outcome(),
            meas.entries
        );
        assert!(
            (rebuilt.fit.v_sq - v_sq).abs() < 0.01 * v_sq && (rebuilt.fit.v_asq - v_asq).abs() < 0.01 * v_asq,
            "instance {i}: {:?} vs {v_sq} {v_asq}",
            rebuilt.fit
        );
    }
}

#[test]
fn lossless_pure_source_leaves_eve_nothing() {
    let input = PurificationInput { arms: [arm(0.0, 1.0, 0.0); 2], source_untrusted_fraction: 0.0 };
    let fit = SourceFit { v_sq: 0.4, v_asq: 2.5, excess: [0.0; 2], max_rel_error: 0.0 };
    let st = purification_from_source(fit, &input).unwrap();
    assert!(st.eve_modes().is_empty());
}

#[test]
fn covariance_estimate_of_independent_vacua() {
    let n = 2_400_000;
    let mut rng = seed::rng(seed::derive(11, "vacuum-cov", 0));
    let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect() };
    let mk = |x: Vec<f64>, p: Vec<f64>| sqzrx::ensemble::QuadratureEnsemble {
        x,
        p,
        normalization: sqzrx::ensemble::Normalization::ShotNoiseUnits,
        samples_per_state: 40,
        bandwidth: 25e6,
    };
    let (a, b) = (mk(draw(), draw()), mk(draw(), draw()));
    let c = gaussian::estimate_covariance(&a, &b, [0.0, 0.0]).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((c.entries[(i, j)] - target).abs() < 3.0 * c.se[(i, j)] + 1e-12, "{i}{j}");
        }
    }
}
