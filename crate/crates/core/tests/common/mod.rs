//! Brute-force Gaussian-state oracles shared by the integration tests. None
//! of them call the library routine they are used to check.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use sqzrx::gaussian::{self, ops, Mat, Quadrature};

/// Random passive (photon-number preserving) symplectic on n modes.
pub fn random_passive(n: usize, rng: &mut impl Rng) -> Mat {
    let mut s = Mat::identity(2 * n, 2 * n);
    for _ in 0..3 * n {
        for a in 0..n {
            s = ops::rotation(n, a, rng.gen_range(-3.2..3.2)) * s;
        }
        if n > 1 {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            s = ops::beamsplitter(n, a, b, rng.gen_range(0.05..0.95)) * s;
        }
    }
    s
}

/// γ = S·diag(ν)·Sᵀ with S = O₁·Z·O₂, returning the state and its ν (descending).
pub fn random_state(n: usize, rng: &mut impl Rng) -> (Mat, Vec<f64>) {
    let mut nu: Vec<f64> = (0..n).map(|_| 1.0 + rng.gen_range(0.0f64..1.0).powi(2) * 8.0).collect();
    let d = DMatrix::from_fn(2 * n, 2 * n, |i, j| if i == j { nu[i / 2] } else { 0.0 });
    let mut z = Mat::identity(2 * n, 2 * n);
    for a in 0..n {
        z = ops::single_mode_squeezer(n, a, rng.gen_range(-1.0..1.0)) * z;
    }
    let s = random_passive(n, rng) * z * random_passive(n, rng);
    nu.sort_by(|a, b| b.total_cmp(a));
    (ops::apply(&s, &d), nu)
}

/// |Im λ| of the eigenvalues of Ω·γ, which come in pairs ±iν.
pub fn nu_via_complex_eigenvalues(cov: &Mat) -> Vec<f64> {
    let n = cov.nrows() / 2;
    let m = gaussian::omega(n) * cov;
    let mut v: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.im.abs()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Entropy of a thermal state with ν = 2n̄ + 1 from its photon-number
/// distribution p_k = n̄^k/(n̄+1)^{k+1}.
pub fn thermal_entropy_series(nu: f64) -> f64 {
    let nbar = (nu - 1.0) / 2.0;
    if nbar == 0.0 {
        return 0.0;
    }
    let q = nbar / (nbar + 1.0);
    let mut p = 1.0 / (nbar + 1.0);
    let mut s = 0.0;
    for _ in 0..200_000 {
        if p < 1e-300 {
            break;
        }
        s -= p * p.log2();
        p *= q;
    }
    s
}

/// Homodyne conditioning as the limit of a Gaussian measurement that is
/// infinitely precise in the measured quadrature and blind to the other.
pub fn condition_eps_limit(cov: &Mat, mode: usize, q: Quadrature, eps: f64) -> Mat {
    let n = cov.nrows() / 2;
    let rest: Vec<usize> = (0..n).filter(|&m| m != mode).flat_map(|m| [2 * m, 2 * m + 1]).collect();
    let b = [2 * mode, 2 * mode + 1];
    let ga = Mat::from_fn(rest.len(), rest.len(), |i, j| cov[(rest[i], rest[j])]);
    let sig = Mat::from_fn(rest.len(), 2, |i, j| cov[(rest[i], b[j])]);
    let mut gb = Mat::from_fn(2, 2, |i, j| cov[(b[i], b[j])]);
    let (keep, drop) = match q {
        Quadrature::X => (0, 1),
        Quadrature::P => (1, 0),
    };
    gb[(keep, keep)] += eps;
    gb[(drop, drop)] += 1.0 / eps;
    let det = gb[(0, 0)] * gb[(1, 1)] - gb[(0, 1)] * gb[(1, 0)];
    let inv = Mat::from_row_slice(2, 2, &[gb[(1, 1)] / det, -gb[(0, 1)] / det, -gb[(1, 0)] / det, gb[(0, 0)] / det]);
    ga - &sig * inv * sig.transpose()
}
