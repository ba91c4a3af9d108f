//! Key-rate machinery against independent closed forms and sweep properties.

use nalgebra::{Matrix2, Matrix4};
use proptest::prelude::*;
use rand::Rng;
use sqzrx::gaussian::{
    build_purification, g, purification_from_source, ArmModel, CovMatrix4, DetectorModel, PurificationInput,
    PurifiedState, Quadrature, SourceFit,
};
use sqzrx::qkd::{
    documented_setup, holevo_bound, key_rates, mutual_information, mutual_information_outcome, Conditioning,
    KeyScenario, Lab,
};
use sqzrx::seed;

fn arm(loss_db: f64, eff: f64, el: f64, excess: f64) -> ArmModel {
    ArmModel { loss_db, excess_noise: excess, fit_excess: false, detector: DetectorModel { efficiency: eff, electronic: el } }
}

fn random_state(rng: &mut impl Rng) -> PurifiedState {
    let v_sq = rng.gen_range(0.3..0.98);
    let v_asq = rng.gen_range(1.0 / v_sq + 0.01..10.0);
    let input = PurificationInput {
        arms: [
            arm(rng.gen_range(0.0..2.0), rng.gen_range(0.7..0.98), rng.gen_range(0.0..0.2), 0.0),
            arm(rng.gen_range(0.05..5.0), rng.gen_range(0.7..0.98), rng.gen_range(0.0..0.2), 0.0),
        ],
        source_untrusted_fraction: rng.gen_range(0.0..1.0),
    };
    let excess = [0.0, rng.gen_range(0.0..0.1)];
    purification_from_source(SourceFit { v_sq, v_asq, excess, max_rel_error: 0.0 }, &input).unwrap()
}

/// I(A:B) for a zero-mean bivariate Gaussian by trapezoidal quadrature of
/// ∫∫ p log₂ p/(p_A p_B).
fn mutual_information_quadrature(va: f64, vb: f64, c: f64) -> f64 {
    let det = va * vb - c * c;
    let (sa, sb) = (va.sqrt(), vb.sqrt());
    let m = 1601;
    let span = 12.0;
    let h = 2.0 * span / (m - 1) as f64;
    let mut total = 0.0;
    for i in 0..m {
        let u = -span + i as f64 * h;
        for j in 0..m {
            let v = -span + j as f64 * h;
            let (a, b) = (u * sa, v * sb);
            let q = (vb * a * a - 2.0 * c * a * b + va * b * b) / det;
            let p = (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
            let pa = (-0.5 * a * a / va).exp() / (2.0 * std::f64::consts::PI * va).sqrt();
            let pb = (-0.5 * b * b / vb).exp() / (2.0 * std::f64::consts::PI * vb).sqrt();
            if p > 0.0 {
                total += p * (p / (pa * pb)).log2() * sa * sb * h * h;
            }
        }
    }
    total
}

#[test]
fn mutual_information_matches_numerical_integration() {
    let cov = CovMatrix4::published();
    let st = build_purification(&cov, &documented_setup()).unwrap();
    let el = [st.input.arms[0].detector.electronic, st.input.arms[1].detector.electronic];
    let out = cov.with_outcome_noise(el);
    for q in [Quadrature::X, Quadrature::P] {
        let o = q.offset();
        let want = mutual_information_quadrature(out[(o, o)], out[(2 + o, 2 + o)], out[(o, 2 + o)]);
        let got = mutual_information(&cov, q, el).unwrap();
        assert!((got - want).abs() < 1e-6, "{q:?}: {got} vs {want}");
    }
    let ix = mutual_information(&cov, Quadrature::X, el).unwrap();
    let ip = mutual_information(&cov, Quadrature::P, el).unwrap();
    assert!(ix < ip);
}

#[test]
fn correlation_at_the_cauchy_schwarz_bound_is_rejected() {
    let mut m = Matrix4::identity();
    m[(0, 2)] = 1.0;
    m[(2, 0)] = 1.0;
    assert!(mutual_information_outcome(&m, Quadrature::X).is_err());
}

fn two_mode_entropy(v: &Matrix2<f64>) -> f64 {
    g(v.determinant().sqrt())
}

/// Eve's single loss mode for a pure source split 50:50 with Lab 2 seeing
/// transmissivity t, built from first principles (no library routines).
fn pure_loss_oracle(v_sq: f64, t: f64) -> (f64, f64, f64) {
    let src = [v_sq, 1.0 / v_sq];
    // per quadrature: Lab 1 variance, Eve variance, Lab1–Eve covariance
    let mut ga = Matrix2::zeros();
    let mut ge = Matrix2::zeros();
    let mut s = Matrix2::zeros();
    for q in 0..2 {
        let half = 0.5 * (src[q] + 1.0);
        let c = 0.5 * (src[q] - 1.0);
        ga[(q, q)] = half;
        ge[(q, q)] = (1.0 - t) * half + t;
        s[(q, q)] = (1.0 - t).sqrt() * c;
    }
    let s_e = two_mode_entropy(&ge);
    // heterodyne on Lab 1 (outcome noise +1)
    let both = ge - s * (ga + Matrix2::identity()).try_inverse().unwrap() * s.transpose();
    let s_both = two_mode_entropy(&both);
    let one = |q: usize| {
        let col = s.column(q).into_owned();
        ge - col * col.transpose() / (ga[(q, q)] + 1.0)
    };
    let s_given_x = two_mode_entropy(&one(0));
    let s_given_p = two_mode_entropy(&one(1));
    (s_e - s_both, s_given_p - s_both, s_given_x - s_both)
}

#[test]
fn pure_loss_holevo_matches_first_principles_oracle() {
    let v_sq = 10f64.powf(-0.3);
    let t = 10f64.powf(-0.3);
    let input = PurificationInput {
        arms: [arm(0.0, 1.0, 0.0, 0.0), arm(3.0, 1.0, 0.0, 0.0)],
        source_untrusted_fraction: 0.0,
    };
    let st = purification_from_source(SourceFit { v_sq, v_asq: 1.0 / v_sq, excess: [0.0; 2], max_rel_error: 0.0 }, &input)
        .unwrap();
    let (full, given_p, given_x) = pure_loss_oracle(v_sq, t);
    let chk = |c, want: f64| {
        let got = holevo_bound(&st, c, Lab::Lab1).unwrap();
        assert!((got - want).abs() < 1e-6, "{c:?}: {got} vs {want}");
    };
    chk(Conditioning::None, full);
    chk(Conditioning::GivenP, given_p);
    chk(Conditioning::GivenX, given_x);
    assert!(full > 1e-3);
}

#[test]
fn vacuum_eve_gives_zero_holevo() {
    let input = PurificationInput { arms: [arm(0.0, 1.0, 0.0, 0.0); 2], source_untrusted_fraction: 0.0 };
    let st = purification_from_source(SourceFit { v_sq: 0.4, v_asq: 2.5, excess: [0.0; 2], max_rel_error: 0.0 }, &input)
        .unwrap();
    for c in [Conditioning::None, Conditioning::GivenX, Conditioning::GivenP, Conditioning::GivenBoth] {
        assert_eq!(holevo_bound(&st, c, Lab::Lab1).unwrap(), 0.0);
    }
}

#[test]
fn disclosure_never_increases_holevo() {
    let mut rng = seed::rng(seed::derive(5, "disclosure", 0));
    for i in 0..1000 {
        let st = random_state(&mut rng);
        let lab = if i % 2 == 0 { Lab::Lab1 } else { Lab::Lab2 };
        let full = holevo_bound(&st, Conditioning::None, lab).unwrap();
        let p = holevo_bound(&st, Conditioning::GivenP, lab).unwrap();
        let x = holevo_bound(&st, Conditioning::GivenX, lab).unwrap();
        assert!(p <= full + 1e-9 && x <= full + 1e-9, "instance {i}: {full} {x} {p}");
    }
}

#[test]
fn untrusted_attribution_never_lowers_holevo() {
    let meas = CovMatrix4::published();
    let base = build_purification(&meas, &documented_setup()).unwrap();
    let mut last = [0.0; 3];
    for k in 0..=10 {
        let mut input = base.input;
        input.source_untrusted_fraction = k as f64 / 10.0;
        let st = purification_from_source(base.fit, &input).unwrap();
        let now = [Conditioning::None, Conditioning::GivenX, Conditioning::GivenP]
            .map(|c| holevo_bound(&st, c, Lab::Lab1).unwrap());
        for q in 0..3 {
            assert!(now[q] >= last[q] - 1e-12, "fraction {k}/10: {now:?} vs {last:?}");
        }
        last = now;
    }
}

#[test]
fn fully_untrusted_source_kills_the_p_key() {
    let meas = CovMatrix4::published();
    let base = build_purification(&meas, &documented_setup()).unwrap();
    let mut input = base.input;
    input.source_untrusted_fraction = 1.0;
    let st = purification_from_source(base.fit, &input).unwrap();
    let r = key_rates(&meas, &KeyScenario::new(1.0).unwrap(), &st).unwrap();
    assert_eq!(r.k_p, 0.0);
}

#[test]
fn published_ordering_of_chi() {
    let meas = CovMatrix4::published();
    let st = build_purification(&meas, &documented_setup()).unwrap();
    let r = key_rates(&meas, &KeyScenario::new(1.0).unwrap(), &st).unwrap();
    assert!(r.chi_given_p <= r.chi_full && r.chi_given_x <= r.chi_full);
    assert!(r.i_x < r.i_p);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rates_are_monotone_in_beta_and_clamped(seed_v in any::<u64>(), b1 in 0.01f64..1.0, b2 in 0.01f64..1.0) {
        let mut rng = seed::rng(seed_v);
        let st = random_state(&mut rng);
        let cov = CovMatrix4::new(st.reduced_outcome(), Matrix4::from_element(f64::NAN), 1_000_000).unwrap();
        let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
        let a = key_rates(&cov, &KeyScenario::new(lo).unwrap(), &st).unwrap();
        let b = key_rates(&cov, &KeyScenario::new(hi).unwrap(), &st).unwrap();
        prop_assert!(a.k_x <= b.k_x && a.k_p <= b.k_p && a.k_xp <= b.k_xp);
        for r in [a, b] {
            prop_assert!(r.k_x >= 0.0 && r.k_p >= 0.0 && r.k_xp >= 0.0);
            if r.beta * r.i_x - r.chi_given_p < 0.0 { prop_assert_eq!(r.k_x, 0.0); }
            if r.beta * r.i_p - r.chi_given_x < 0.0 { prop_assert_eq!(r.k_p, 0.0); }
            if r.beta * (r.i_x + r.i_p) - r.chi_full < 0.0 { prop_assert_eq!(r.k_xp, 0.0); }
        }
    }
}

#[test]
fn vanishing_beta_gives_no_key() {
    let meas = CovMatrix4::published();
    let st = build_purification(&meas, &documented_setup()).unwrap();
    let r = key_rates(&meas, &KeyScenario::new(1e-9).unwrap(), &st).unwrap();
    assert_eq!((r.k_x, r.k_p, r.k_xp), (0.0, 0.0, 0.0));
}

#[test]
fn vacuum_covariance_gives_no_key() {
    let input = PurificationInput { arms: [arm(0.0, 1.0, 0.0, 0.0); 2], source_untrusted_fraction: 0.0 };
    let st = purification_from_source(SourceFit { v_sq: 1.0, v_asq: 1.0, excess: [0.0; 2], max_rel_error: 0.0 }, &input)
        .unwrap();
    let r = key_rates(&CovMatrix4::vacuum(1_000_000), &KeyScenario::new(1.0).unwrap(), &st).unwrap();
    assert_eq!((r.k_x, r.k_p, r.k_xp), (0.0, 0.0, 0.0));
}
