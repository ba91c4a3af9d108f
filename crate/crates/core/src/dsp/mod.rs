//! Reconstruction chain: pilot frequency and clock recovery, polarization
//! alignment, UKF phase tracking, pilot removal, mode filtering, the
//! decorrelating rotation and shot-noise normalization.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::ensemble::{Normalization, QuadratureEnsemble};
use crate::spectral::{self, Phasor};

mod pilot;
mod pipeline;
mod polarization;
mod psd;
mod rotation;
mod ukf;

pub use pilot::{
    clock_recover, estimate_pilot, estimate_pilot_in_spectrum, linear_fit, median_filter5, unwrap, ClockModifier,
    PilotEstimate,
};
pub use pipeline::{
    calibrate, reconstruct_frame, Calibration, ChannelCalibration, DspConfig, FramePsd, FrameResult, FrameSummary,
    ReconstructionRecord, StageEnsembles,
};
pub use polarization::{
    apply_inverse_jones, coherency, polarization_recover, search_polarization, PolarizationEstimate,
    PolarizationResult,
};
pub use psd::{fit_squeezing_model, model_psd, welch_psd, Psd, SqueezingFit};
pub use rotation::{rotate, rotate_decorrelate};
pub use ukf::{ukf_phase_track, ukf_phase_track_with, UkfOptions};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("trace too short: {samples} samples ({why})")]
    TooShort { samples: usize, why: String },
    #[error("pilot not found near {approx} Hz: peak-to-median {ratio_db:.1} dB")]
    PilotNotFound { approx: f64, ratio_db: f64 },
    #[error("implausible clock ratio {0}")]
    ImplausibleClock(f64),
    #[error("phase tracker diverged at decimated sample {0}")]
    DivergenceDetected(usize),
    #[error("rotation angle unidentifiable: principal variance ratio {0:.3}")]
    AmbiguousRotation(f64),
    #[error("squeezing fit diverged: residual {residual:.3e} vs baseline {baseline:.3e}")]
    FitDiverged { residual: f64, baseline: f64 },
    #[error("nfft {nfft} exceeds sequence length {len}")]
    NfftTooLarge { nfft: usize, len: usize },
    #[error("bad input: {0}")]
    BadInput(String),
}

/// One-sided complex signal. For a real input x the real part equals x and
/// the total power is twice that of x.
#[derive(Debug, Clone)]
pub struct AnalyticSignal {
    pub samples: Vec<C64>,
    pub sample_rate: f64,
}

pub const MIN_TRACE: usize = 1 << 12;

/// Turns the DFT of a real sequence into the DFT of its analytic signal.
pub fn to_analytic_spectrum(spec: &mut [C64]) {
    let n = spec.len();
    let half = n.div_ceil(2);
    for v in &mut spec[1..half] {
        *v *= 2.0;
    }
    for v in &mut spec[n / 2 + 1..] {
        *v = C64::new(0.0, 0.0);
    }
}

pub fn analytic(x: &[f64], sample_rate: f64) -> Result<AnalyticSignal, DspError> {
    if x.len() < MIN_TRACE {
        return Err(DspError::TooShort { samples: x.len(), why: "analytic signal needs 2^12 samples".into() });
    }
    let mut s = spectral::fft_real(x);
    to_analytic_spectrum(&mut s);
    spectral::ifft(&mut s);
    Ok(AnalyticSignal { samples: s, sample_rate })
}

/// Digital down-conversion: b[n] = z[n]·e^{−i2π f_c n/R}.
pub fn demodulate(sig: &AnalyticSignal, carrier: f64) -> Vec<C64> {
    sig.samples.iter().zip(Phasor::new(-carrier / sig.sample_rate)).map(|(z, t)| z * t).collect()
}

/// Boxcar temporal modes: one (Re, Im) block mean per `samples_per_state`.
pub fn mode_filter(bb: &[C64], samples_per_state: usize, sample_rate: f64) -> Result<QuadratureEnsemble, DspError> {
    if samples_per_state == 0 {
        return Err(DspError::BadInput("samples_per_state must be positive".into()));
    }
    if bb.len() < samples_per_state * 1000 {
        return Err(DspError::TooShort { samples: bb.len(), why: "mode filter needs 10^3 states".into() });
    }
    let k = 1.0 / samples_per_state as f64;
    let (x, p): (Vec<f64>, Vec<f64>) = bb
        .chunks_exact(samples_per_state)
        .map(|c| {
            let s: C64 = c.iter().sum();
            (s.re * k, s.im * k)
        })
        .unzip();
    Ok(QuadratureEnsemble {
        x,
        p,
        normalization: Normalization::Raw,
        samples_per_state,
        bandwidth: sample_rate / samples_per_state as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cosine_becomes_single_tone() {
        let n = 8192;
        let f = 0.1234;
        let x: Vec<f64> = (0..n).map(|t| (2.0 * PI * f * t as f64).cos()).collect();
        let a = analytic(&x, 1.0).unwrap();
        for (t, z) in a.samples.iter().enumerate().skip(200).take(n - 400) {
            assert!((z - C64::from_polar(1.0, 2.0 * PI * f * t as f64)).norm() < 2e-2);
        }
        let mut s = a.samples.clone();
        spectral::fft(&mut s);
        let total: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        let neg: f64 = s[n / 2 + 1..].iter().map(|v| v.norm_sqr()).sum();
        assert!(neg / total < 1e-6);
    }

    #[test]
    fn short_trace_rejected() {
        assert!(matches!(analytic(&[0.0; 100], 1.0), Err(DspError::TooShort { .. })));
    }

    #[test]
    fn boxcar_rate() {
        let bb = vec![C64::new(1.0, -2.0); 40_000];
        let e = mode_filter(&bb, 40, 1e9).unwrap();
        assert_eq!(e.len(), 1000);
        assert_eq!(e.bandwidth, 25e6);
        assert!((e.x[3] - 1.0).abs() < 1e-12 && (e.p[3] + 2.0).abs() < 1e-12);
    }
}
