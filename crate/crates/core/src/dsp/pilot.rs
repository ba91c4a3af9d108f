use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{AnalyticSignal, DspError};
use crate::spectral;

/// Recovered pilot. `phase_track` is sampled at `track_times` (ADC sample
/// positions, fractional) after removing the least-squares line.
#[derive(Debug, Clone)]
pub struct PilotEstimate {
    pub frequency: f64,
    pub phase_track: Vec<f64>,
    pub track_times: Vec<f64>,
    /// Pilot-to-noise ratio (dB) over the extraction band, with the noise
    /// density taken from the neighbouring bands.
    pub snr_db: f64,
    /// RMS amplitude of the band-passed analytic pilot.
    pub amplitude: f64,
    /// Phase of the fitted line at sample 0.
    pub phase0: f64,
}

impl PilotEstimate {
    /// Decimated samples per second of the track.
    pub fn track_rate(&self, sample_rate: f64) -> f64 {
        match self.track_times.get(1) {
            Some(d) => sample_rate / d,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModifier {
    pub ratio: f64,
}

impl ClockModifier {
    pub const IDENTITY: ClockModifier = ClockModifier { ratio: 1.0 };

    pub fn ppm(&self) -> f64 {
        (self.ratio - 1.0) * 1e6
    }
}

/// Ratio of received to transmitted pilot spacing.
pub fn clock_recover(p1: &PilotEstimate, p2: &PilotEstimate, tx_f1: f64, tx_f2: f64) -> Result<ClockModifier, DspError> {
    if tx_f1 == tx_f2 {
        return Err(DspError::BadInput("clock recovery needs two distinct pilots".into()));
    }
    let ratio = (p2.frequency - p1.frequency) / (tx_f2 - tx_f1);
    if !((ratio - 1.0).abs() < 1e-3) {
        return Err(DspError::ImplausibleClock(ratio));
    }
    Ok(ClockModifier { ratio })
}

/// Centered median of 5 (shrinking at the ends).
pub fn median_filter5(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            let mut w: Vec<f64> = x[lo..hi].to_vec();
            w.sort_by(f64::total_cmp);
            w[w.len() / 2]
        })
        .collect()
}

/// Unwrap wrapped phases with jump threshold π.
pub fn unwrap(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &w in wrapped {
        if let Some(p) = prev {
            let d = w - p;
            if d > PI {
                offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
            } else if d < -PI {
                offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
            }
        }
        prev = Some(w);
        out.push(w + offset);
    }
    out
}

/// Least-squares line y = a + b·t; returns (a, b).
pub fn linear_fit(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        sty += (a - tm) * (b - ym);
        stt += (a - tm) * (a - tm);
    }
    let b = if stt > 0.0 { sty / stt } else { 0.0 };
    (ym - b * tm, b)
}

fn wrap_pi(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Unwrapped phase of a decimated complex pilot. Phase increments (wrapped to
/// ±π) that stray more than π/2 from their 5-point median are replaced by the
/// median, so isolated spikes cannot add a spurious cycle.
fn robust_phase(p: &[C64]) -> Vec<f64> {
    let raw: Vec<f64> = p.iter().map(|v| v.arg()).collect();
    let mut inc: Vec<f64> = raw.windows(2).map(|w| wrap_pi(w[1] - w[0])).collect();
    if inc.is_empty() {
        return raw;
    }
    let smooth = median_filter5(&inc);
    for (d, m) in inc.iter_mut().zip(&smooth) {
        if (*d - m).abs() > PI / 2.0 {
            *d = *m;
        }
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut acc = raw[0];
    out.push(acc);
    for d in inc {
        acc += d;
        out.push(acc);
    }
    out
}

/// Pilot search and extraction on the DFT of a real trace (`spec`, length N).
/// `scale` maps DFT bins of the real trace to analytic amplitudes (2/N).
pub fn estimate_pilot_in_spectrum(
    spec: &[C64],
    sample_rate: f64,
    scale: f64,
    approx_freq: f64,
    search_halfwidth: f64,
    band_halfwidth: f64,
) -> Result<PilotEstimate, DspError> {
    let n = spec.len();
    if n < super::MIN_TRACE {
        return Err(DspError::TooShort { samples: n, why: "pilot search needs 2^12 samples".into() });
    }
    let df = sample_rate / n as f64;
    let k_lo = (((approx_freq - search_halfwidth) / df).ceil().max(1.0)) as usize;
    let k_hi = (((approx_freq + search_halfwidth) / df).floor() as usize).min(n / 2 - 1);
    if k_lo >= k_hi {
        return Err(DspError::BadInput(format!("empty search window around {approx_freq} Hz")));
    }
    let power: Vec<f64> = spec[k_lo..=k_hi].iter().map(|v| v.norm_sqr()).collect();
    let (ip, &peak) = power.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let mut sorted = power.clone();
    let mid = sorted.len() / 2;
    let median = *sorted.select_nth_unstable_by(mid, f64::total_cmp).1;
    let ratio_db = 10.0 * (peak / median.max(f64::MIN_POSITIVE)).log10();
    if !(ratio_db >= 10.0) {
        return Err(DspError::PilotNotFound { approx: approx_freq, ratio_db });
    }
    let kp = k_lo + ip;

    let kb = ((band_halfwidth / df).round() as usize).max(8);
    let m = 2 * kb;
    let mut band = vec![C64::new(0.0, 0.0); m];
    let mut band_power = 0.0;
    for j in -(kb as i64)..(kb as i64) {
        let k = (kp as i64 + j).rem_euclid(n as i64) as usize;
        band[j.rem_euclid(m as i64) as usize] = spec[k] * scale;
        band_power += spec[k].norm_sqr();
    }
    FftPlanner::new().plan_fft_inverse(m).process(&mut band);
    let dec = n as f64 / m as f64;
    let times: Vec<f64> = (0..m).map(|i| i as f64 * dec).collect();
    let phase = robust_phase(&band);
    let (a, b) = linear_fit(&times, &phase);
    let frequency = kp as f64 * df + b * sample_rate / (2.0 * PI);
    let track: Vec<f64> = phase.iter().zip(&times).map(|(p, t)| p - a - b * t).collect();
    // noise floor from the rings 1–2 band half-widths away, clear of the
    // pilot's own phase-noise skirt near the peak
    let mut ring: Vec<f64> = (kb as i64..2 * kb as i64)
        .flat_map(|j| [kp as i64 + j, kp as i64 - j - 1])
        .map(|k| spec[k.rem_euclid(n as i64) as usize].norm_sqr())
        .collect();
    let mid = ring.len() / 2;
    let floor = *ring.select_nth_unstable_by(mid, f64::total_cmp).1 / std::f64::consts::LN_2;
    let noise = floor * m as f64;
    let snr = ((band_power - noise) / noise).max(f64::MIN_POSITIVE);
    let amplitude = (band.iter().map(|v| v.norm_sqr()).sum::<f64>() / m as f64).sqrt();
    Ok(PilotEstimate {
        frequency,
        phase_track: track,
        track_times: times,
        snr_db: 10.0 * snr.log10(),
        amplitude,
        phase0: wrap_pi(a),
    })
}

/// Pilot recovery from an analytic signal: search ±`search_halfwidth` around
/// `approx_freq`, band-pass ±`band_halfwidth` around the peak, linear fit on
/// the unwrapped phase.
pub fn estimate_pilot(
    sig: &AnalyticSignal,
    approx_freq: f64,
    search_halfwidth: f64,
    band_halfwidth: f64,
) -> Result<PilotEstimate, DspError> {
    let mut s = sig.samples.clone();
    spectral::fft(&mut s);
    let n = s.len() as f64;
    estimate_pilot_in_spectrum(&s, sig.sample_rate, 1.0 / n, approx_freq, search_halfwidth, band_halfwidth)
}
