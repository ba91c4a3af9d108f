use std::f64::consts::FRAC_PI_4;

use super::DspError;
use crate::ensemble::QuadratureEnsemble;
use crate::optim::golden_section;

/// Applies R(−Φ̃): x' = x cos Φ̃ + p sin Φ̃, p' = −x sin Φ̃ + p cos Φ̃, with
/// R(Φ) = [[cos Φ, −sin Φ], [sin Φ, cos Φ]]. A state with covariance
/// R(Φ)γR(Φ)ᵀ comes out diagonal at Φ̃ = Φ.
pub fn rotate(ens: &QuadratureEnsemble, phi_tilde: f64) -> QuadratureEnsemble {
    let (s, c) = phi_tilde.sin_cos();
    let (x, p) = ens.x.iter().zip(&ens.p).map(|(&x, &p)| (x * c + p * s, -x * s + p * c)).unzip();
    QuadratureEnsemble { x, p, ..ens.clone() }
}

/// Rotated moments (var x', var p', cov x'p') from unrotated ones.
fn rotated_moments((vx, vp, cxp): (f64, f64, f64), a: f64) -> (f64, f64, f64) {
    let (s, c) = a.sin_cos();
    let (s2, c2) = ((2.0 * a).sin(), (2.0 * a).cos());
    let x = c * c * vx + s * s * vp + s2 * cxp;
    let p = s * s * vx + c * c * vp - s2 * cxp;
    let cov = -0.5 * s2 * (vx - vp) + c2 * cxp;
    (x, p, cov)
}

/// Finds Φ̃ minimizing |cov(x', p')| and rotates. The search runs over
/// [−π/4, π/4): a 64-point scan brackets the zero of the covariance (which is
/// a pure sinusoid of 2Φ̃) and a golden-section search refines it. The
/// smaller variance is then put on x by a further ±π/2, choosing the sign
/// with the smaller |Φ̃|.
pub fn rotate_decorrelate(ens: &QuadratureEnsemble) -> Result<(QuadratureEnsemble, f64), DspError> {
    if ens.len() < 10_000 {
        return Err(DspError::TooShort { samples: ens.len(), why: "rotation needs 10^4 states".into() });
    }
    let m = ens.moments();
    let (vx, vp, cxp) = m;
    let half_tr = 0.5 * (vx + vp);
    let disc = (0.25 * (vx - vp).powi(2) + cxp * cxp).sqrt();
    let ratio = (half_tr - disc) / (half_tr + disc);
    if ratio >= 0.95 {
        return Err(DspError::AmbiguousRotation(ratio));
    }
    let obj = |a: f64| rotated_moments(m, a).2.abs();
    let scan = 64;
    let step = 2.0 * FRAC_PI_4 / scan as f64;
    let (ibest, _) = (0..scan)
        .map(|i| (i, obj(-FRAC_PI_4 + i as f64 * step)))
        .fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
    let centre = -FRAC_PI_4 + ibest as f64 * step;
    let mut a = golden_section(obj, centre - step, centre + step, 1e-12);
    if a >= FRAC_PI_4 {
        a -= 2.0 * FRAC_PI_4;
    } else if a < -FRAC_PI_4 {
        a += 2.0 * FRAC_PI_4;
    }
    let (rx, rp, _) = rotated_moments(m, a);
    if rx > rp {
        a += if a < 0.0 { 2.0 * FRAC_PI_4 } else { -2.0 * FRAC_PI_4 };
    }
    Ok((rotate(ens, a), a))
}
