//! Unscented Kalman filter on a [phase, phase-rate] random walk.

use nalgebra::{Matrix2, Vector2};

use super::DspError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfOptions {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Rate-state process variance relative to the phase process variance.
    pub rate_noise_ratio: f64,
    /// Innovation-variance factor and run length for divergence detection.
    pub divergence_factor: f64,
    pub divergence_run: usize,
}

impl Default for UkfOptions {
    fn default() -> Self {
        UkfOptions {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
            rate_noise_ratio: 1e-4,
            divergence_factor: 100.0,
            divergence_run: 1000,
        }
    }
}

struct SigmaWeights {
    lambda: f64,
    wm: [f64; 5],
    wc: [f64; 5],
}

fn weights(o: &UkfOptions) -> SigmaWeights {
    let n = 2.0;
    let lambda = o.alpha * o.alpha * (n + o.kappa) - n;
    let w = 1.0 / (2.0 * (n + lambda));
    let wm0 = lambda / (n + lambda);
    let wc0 = wm0 + 1.0 - o.alpha * o.alpha + o.beta;
    SigmaWeights { lambda, wm: [wm0, w, w, w, w], wc: [wc0, w, w, w, w] }
}

fn sigma_points(x: &Vector2<f64>, p: &Matrix2<f64>, lambda: f64) -> [Vector2<f64>; 5] {
    let s = (p * (2.0 + lambda)).cholesky().map(|c| c.l()).unwrap_or_else(|| {
        let d = p.map_diagonal(|v| v.max(0.0).sqrt());
        Matrix2::from_diagonal(&(d * (2.0 + lambda).sqrt()))
    });
    let (c0, c1) = (s.column(0).into_owned(), s.column(1).into_owned());
    [*x, x + c0, x + c1, x - c0, x - c1]
}

/// Weighted mean computed relative to the centre point, which keeps the large
/// alternating weights of a small-α transform from cancelling catastrophically.
fn weighted_mean<const D: usize>(pts: &[nalgebra::SVector<f64, D>; 5], wm: &[f64; 5]) -> nalgebra::SVector<f64, D> {
    let mut m = pts[0];
    for i in 1..5 {
        m += (pts[i] - pts[0]) * wm[i];
    }
    m
}

/// Phase estimates for unwrapped observations y_k = φ_k + noise, with phase
/// increments of variance `process_var` per step and observation variance
/// `obs_var`.
pub fn ukf_phase_track(obs: &[f64], process_var: f64, obs_var: f64) -> Result<Vec<f64>, DspError> {
    ukf_phase_track_with(obs, process_var, obs_var, &UkfOptions::default())
}

pub fn ukf_phase_track_with(obs: &[f64], process_var: f64, obs_var: f64, o: &UkfOptions) -> Result<Vec<f64>, DspError> {
    if !(process_var > 0.0 && obs_var > 0.0) {
        return Err(DspError::BadInput("UKF noise variances must be positive".into()));
    }
    if obs.is_empty() {
        return Ok(vec![]);
    }
    let w = weights(o);
    let f = |s: &Vector2<f64>| Vector2::new(s[0] + s[1], s[1]);
    let h = |s: &Vector2<f64>| nalgebra::Vector1::new(s[0]);
    let q = Matrix2::new(process_var, 0.0, 0.0, process_var * o.rate_noise_ratio);
    let mut x = Vector2::new(obs[0], 0.0);
    let mut p = Matrix2::new(obs_var + process_var, 0.0, 0.0, process_var);
    let mut out = Vec::with_capacity(obs.len());
    let mut ewma: Option<f64> = None;
    let mut run = 0usize;
    for (k, &y) in obs.iter().enumerate() {
        if k > 0 {
            let pts = sigma_points(&x, &p, w.lambda).map(|s| f(&s));
            let xm = weighted_mean(&pts, &w.wm);
            let mut pm = q;
            for i in 0..5 {
                let d = pts[i] - xm;
                pm += d * d.transpose() * w.wc[i];
            }
            x = xm;
            p = (pm + pm.transpose()) * 0.5;
        }
        let pts = sigma_points(&x, &p, w.lambda);
        let ys = pts.map(|s| h(&s));
        let ym = weighted_mean(&ys, &w.wm);
        let (mut s, mut pxy) = (obs_var, Vector2::zeros());
        for i in 0..5 {
            let dy = ys[i] - ym;
            s += dy[0] * dy[0] * w.wc[i];
            pxy += (pts[i] - x) * dy[0] * w.wc[i];
        }
        let gain = pxy / s;
        let nu = y - ym[0];
        x += gain * nu;
        p -= gain * gain.transpose() * s;
        p = (p + p.transpose()) * 0.5;
        out.push(x[0]);

        let e = match ewma {
            None => nu * nu,
            Some(v) => v + (nu * nu - v) / 64.0,
        };
        ewma = Some(e);
        if e > o.divergence_factor * s {
            run += 1;
            if run > o.divergence_run {
                return Err(DspError::DivergenceDetected(k));
            }
        } else {
            run = 0;
        }
    }
    Ok(out)
}
