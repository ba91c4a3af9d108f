use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use super::DspError;

/// Coherency matrix J = Σ [x, y]ᵀ[x, y]* (J[0][1] = Σ x·y*).
pub fn coherency(x: &[C64], y: &[C64]) -> [[C64; 2]; 2] {
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, C64::new(0.0, 0.0));
    for (a, b) in x.iter().zip(y) {
        xx += a.norm_sqr();
        yy += b.norm_sqr();
        xy += a * b.conj();
    }
    [[C64::new(xx, 0.0), xy], [xy.conj(), C64::new(yy, 0.0)]]
}

/// Power in the X output of the inverse channel at (θ, φ).
fn x_power(j: &[[C64; 2]; 2], theta: f64, phi: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * c * j[0][0].re + s * s * j[1][1].re - 2.0 * c * s * (C64::from_polar(1.0, phi) * j[0][1]).re
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationEstimate {
    pub theta: f64,
    pub phi: f64,
    /// Share of the total power in the X output.
    pub x_fraction: f64,
    /// Already aligned: identity returned.
    pub degenerate: bool,
}

const GRID: usize = 64;

/// 64×64 grid over θ ∈ [0, π/2], φ ∈ [0, 2π), then repeated three-point
/// quadratic refinement with shrinking steps around the best cell.
pub fn search_polarization(j: &[[C64; 2]; 2]) -> PolarizationEstimate {
    let total = j[0][0].re + j[1][1].re;
    if !(total > 0.0) {
        return PolarizationEstimate { theta: 0.0, phi: 0.0, x_fraction: 0.0, degenerate: true };
    }
    let dth0 = (PI / 2.0) / (GRID - 1) as f64;
    let dph0 = 2.0 * PI / GRID as f64;
    let (mut best, mut th, mut ph) = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..GRID {
        for k in 0..GRID {
            let (t, p) = (i as f64 * dth0, k as f64 * dph0);
            let v = x_power(j, t, p);
            if v > best {
                (best, th, ph) = (v, t, p);
            }
        }
    }
    let (mut dth, mut dph) = (dth0, dph0);
    for _ in 0..40 {
        let vertex = |fm: f64, f0: f64, fp: f64| {
            let den = fm - 2.0 * f0 + fp;
            if den < 0.0 {
                (0.5 * (fm - fp) / den).clamp(-1.0, 1.0)
            } else if fp > fm {
                1.0
            } else if fm > fp {
                -1.0
            } else {
                0.0
            }
        };
        let f0 = x_power(j, th, ph);
        let ut = vertex(x_power(j, th - dth, ph), f0, x_power(j, th + dth, ph));
        let up = vertex(x_power(j, th, ph - dph), f0, x_power(j, th, ph + dph));
        let (nt, np) = (th + ut * dth, ph + up * dph);
        if x_power(j, nt, np) >= f0 {
            (th, ph) = (nt, np);
        }
        dth *= 0.5;
        dph *= 0.5;
    }
    // fold into the canonical range
    if th < 0.0 {
        th = -th;
        ph += PI;
    }
    if th > PI / 2.0 {
        th = PI - th;
        ph += PI;
        // (π − θ) flips the sign of cos, equivalent to a global phase on X
    }
    ph = ph.rem_euclid(2.0 * PI);
    let pmax = x_power(j, th, ph);
    let degenerate = (pmax - j[0][0].re) / total < 1e-4;
    if degenerate {
        return PolarizationEstimate { theta: 0.0, phi: 0.0, x_fraction: j[0][0].re / total, degenerate };
    }
    PolarizationEstimate { theta: th, phi: ph, x_fraction: pmax / total, degenerate }
}

/// Inverse of the Jones matrix [[c, s·e^{−iφ}], [−s·e^{iφ}, c]].
pub fn apply_inverse_jones(bx: &[C64], by: &[C64], theta: f64, phi: f64) -> (Vec<C64>, Vec<C64>) {
    let (s, c) = theta.sin_cos();
    let e = C64::from_polar(1.0, phi);
    bx.iter().zip(by).map(|(x, y)| (x * c - e.conj() * y * s, e * x * s + y * c)).unzip()
}

#[derive(Debug, Clone)]
pub struct PolarizationResult {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
    pub estimate: PolarizationEstimate,
    /// Mean |Y|² relative to the vacuum baseband reference (dB).
    pub residual_y_db: f64,
}

/// Aligns the dominant (pilot-bearing) polarization to X. Isotropic noise adds
/// a multiple of the identity to J and does not move the optimum.
pub fn polarization_recover(bx: &[C64], by: &[C64], vacuum_power_y: f64) -> Result<PolarizationResult, DspError> {
    if bx.len() != by.len() || bx.is_empty() {
        return Err(DspError::BadInput("polarization channels must be non-empty and equally long".into()));
    }
    let j = coherency(bx, by);
    let estimate = search_polarization(&j);
    let (x, y) = apply_inverse_jones(bx, by, estimate.theta, estimate.phi);
    let py = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
    Ok(PolarizationResult { x, y, estimate, residual_y_db: 10.0 * (py / vacuum_power_y).log10() })
}
