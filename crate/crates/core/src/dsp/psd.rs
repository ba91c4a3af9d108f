use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::DspError;
use crate::optim::{levenberg_marquardt, LmOptions};
use crate::simkit::theory::received_spectrum;
use crate::simkit::SqueezerModel;

/// One-sided power spectral density of a real sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub segments: usize,
}

impl Psd {
    /// 10·log10[(S − E)/(V − E)] per bin, with E the electronic PSD if given.
    pub fn normalized_db(&self, vacuum: &Psd, electronic: Option<&Psd>) -> Result<Vec<f64>, DspError> {
        if vacuum.values.len() != self.values.len() || electronic.is_some_and(|e| e.values.len() != self.values.len()) {
            return Err(DspError::BadInput("PSDs have different resolutions".into()));
        }
        Ok((0..self.values.len())
            .map(|k| {
                let e = electronic.map_or(0.0, |e| e.values[k]);
                10.0 * ((self.values[k] - e) / (vacuum.values[k] - e)).log10()
            })
            .collect())
    }

    /// Linear ratio (S − E)/(V − E).
    pub fn normalized(&self, vacuum: &Psd, electronic: Option<&Psd>) -> Result<Vec<f64>, DspError> {
        Ok(self.normalized_db(vacuum, electronic)?.into_iter().map(|d| 10f64.powf(d / 10.0)).collect())
    }
}

/// Welch estimate with a Hann window and 50% overlap, scaled so that the
/// integral over [0, rate/2] equals the variance.
pub fn welch_psd(seq: &[f64], nfft: usize, sample_rate: f64) -> Result<Psd, DspError> {
    if nfft > seq.len() {
        return Err(DspError::NfftTooLarge { nfft, len: seq.len() });
    }
    if nfft < 4 {
        return Err(DspError::BadInput("nfft must be at least 4".into()));
    }
    let win: Vec<f64> = (0..nfft).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nfft as f64).cos()).collect();
    let wss: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let hop = nfft / 2;
    let nb = nfft / 2 + 1;
    let mut acc = vec![0.0; nb];
    let mut buf = vec![C64::new(0.0, 0.0); nfft];
    let mut segments = 0;
    let mut start = 0;
    while start + nfft <= seq.len() {
        let seg = &seq[start..start + nfft];
        let mean = seg.iter().sum::<f64>() / nfft as f64;
        for i in 0..nfft {
            buf[i] = C64::new((seg[i] - mean) * win[i], 0.0);
        }
        fft.process(&mut buf);
        for (a, v) in acc.iter_mut().zip(&buf) {
            *a += v.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (segments as f64 * wss * sample_rate);
    let values = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (nfft % 2 == 0 && k == nfft / 2) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let freqs = (0..nb).map(|k| k as f64 * sample_rate / nfft as f64).collect();
    Ok(Psd { freqs, values, segments })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezingFit {
    /// Fitted source including `rms_phase_noise`.
    pub model: SqueezerModel,
    pub residual_norm: f64,
    /// The same fit with the phase noise held at zero.
    pub baseline: SqueezerModel,
    pub baseline_residual: f64,
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Shot-noise-normalized PSD pair predicted for a source seen through a
/// detection factor `d` (transmission, detector efficiency and, for
/// heterodyne, the factor ½): R = 1 + d·(S_mix − 1), S_mix including phase
/// noise mixing c = (1 + e^{−2σ²})/2.
pub fn model_psd(model: &SqueezerModel, d: f64, f: f64) -> (f64, f64) {
    received_spectrum(model, d, f)
}

/// Joint least-squares fit of {pump_ratio, γ, escape efficiency,
/// rms_phase_noise} to squeezed and anti-squeezed PSDs in shot-noise units
/// (linear), at `freqs` (Hz), for a known detection factor.
pub fn fit_squeezing_model(
    freqs: &[f64],
    psd_sq: &[f64],
    psd_asq: &[f64],
    detection: f64,
) -> Result<SqueezingFit, DspError> {
    if freqs.len() != psd_sq.len() || freqs.len() != psd_asq.len() || freqs.len() < 5 {
        return Err(DspError::BadInput("fit needs at least 5 matching PSD points".into()));
    }
    if !(detection > 0.0 && detection <= 1.0) {
        return Err(DspError::BadInput(format!("detection factor {detection}")));
    }
    let fmax = freqs.iter().cloned().fold(0.0, f64::max);
    let make = |p: &[f64]| SqueezerModel {
        pump_ratio: 0.999 * logistic(p[0]),
        bandwidth_gamma: fmax * p[1].exp(),
        escape_efficiency: logistic(p[2]),
        rms_phase_noise: p.get(3).map_or(0.0, |v| v.abs()),
        ..Default::default()
    };
    let resid = |p: &[f64]| {
        let m = make(p);
        let mut r = Vec::with_capacity(2 * freqs.len());
        for ((&f, &a), &b) in freqs.iter().zip(psd_sq).zip(psd_asq) {
            let (ma, mb) = model_psd(&m, detection, f);
            r.push(ma / a - 1.0);
            r.push(mb / b - 1.0);
        }
        r
    };
    let opts = LmOptions { max_iter: 400, ..Default::default() };
    let mut base: Option<(Vec<f64>, f64)> = None;
    for &x in &[0.2, 0.5, 0.8] {
        for &g in &[0.1, 0.5, 2.0] {
            for &eta in &[0.5, 0.9] {
                let r = levenberg_marquardt(resid, &[logit(x / 0.999), (g as f64).ln(), logit(eta)], opts);
                if base.as_ref().is_none_or(|b| r.residual_norm < b.1) {
                    base = Some((r.x, r.residual_norm));
                }
            }
        }
    }
    let (bx, baseline_residual) = base.unwrap();
    let mut full: Option<(Vec<f64>, f64)> = None;
    for &s in &[0.0, 0.05, 0.15, 0.3] {
        let r = levenberg_marquardt(resid, &[bx[0], bx[1], bx[2], s], opts);
        if full.as_ref().is_none_or(|b| r.residual_norm < b.1) {
            full = Some((r.x, r.residual_norm));
        }
    }
    let (fx, residual_norm) = full.unwrap();
    if !(residual_norm <= 3.0 * baseline_residual) || !residual_norm.is_finite() {
        return Err(DspError::FitDiverged { residual: residual_norm, baseline: baseline_residual });
    }
    Ok(SqueezingFit { model: make(&fx), residual_norm, baseline: make(&bx), baseline_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn white_noise_is_flat_at_twice_variance_over_rate() {
        let mut rng = crate::seed::rng(3);
        let x: Vec<f64> = (0..1 << 18).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let p = welch_psd(&x, 1024, 1e6).unwrap();
        let mean = p.values[10..500].iter().sum::<f64>() / 490.0;
        assert!((mean / (2.0 * 4.0 / 1e6) - 1.0).abs() < 0.02);
    }

    #[test]
    fn nfft_longer_than_sequence_rejected() {
        assert!(matches!(welch_psd(&[0.0; 10], 16, 1.0), Err(DspError::NfftTooLarge { .. })));
    }

    #[test]
    fn exact_model_psds_are_recovered() {
        let truth = SqueezerModel {
            pump_ratio: 0.42,
            bandwidth_gamma: 12e6,
            escape_efficiency: 0.8,
            rms_phase_noise: 0.07,
            ..Default::default()
        };
        let d = 0.4;
        let freqs: Vec<f64> = (0..60).map(|k| 0.5e6 + k as f64 * 0.5e6).collect();
        let (sq, asq): (Vec<f64>, Vec<f64>) = freqs.iter().map(|&f| model_psd(&truth, d, f)).unzip();
        let fit = fit_squeezing_model(&freqs, &sq, &asq, d).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.model.pump_ratio, 0.42) < 5e-5, "{:?}", fit.model);
        assert!(rel(fit.model.bandwidth_gamma, 12e6) < 5e-5, "{:?}", fit.model);
        assert!(rel(fit.model.escape_efficiency, 0.8) < 5e-5, "{:?}", fit.model);
        assert!(rel(fit.model.rms_phase_noise, 0.07) < 5e-5, "{:?}", fit.model);
        assert!(fit.residual_norm < fit.baseline_residual);
    }
}
