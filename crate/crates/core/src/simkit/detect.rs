use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{PolarizedField, Provenance, RawTrace, SimError, Tone};
use crate::spectral::{self, Phasor};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverModel {
    pub lo_detuning: f64,
    pub lo_linewidth: f64,
    pub adc_rate: f64,
    pub adc_bits: u16,
    pub clock_ppm: f64,
    pub electronic_noise_db: f64,
    pub detector_efficiency: f64,
    /// One-sided signal bandwidth used for the aliasing check (Hz).
    pub signal_bandwidth: f64,
    /// Two detectors behind a polarization splitter, else X only.
    pub polarization_diverse: bool,
}

impl Default for ReceiverModel {
    fn default() -> Self {
        ReceiverModel {
            lo_detuning: 200e6,
            lo_linewidth: 10e3,
            adc_rate: 1e9,
            adc_bits: 16,
            clock_ppm: 0.0,
            electronic_noise_db: -15.0,
            detector_efficiency: 0.9,
            signal_bandwidth: 25e6,
            polarization_diverse: true,
        }
    }
}

impl ReceiverModel {
    pub fn channels(&self) -> usize {
        if self.polarization_diverse {
            2
        } else {
            1
        }
    }

    /// Electronic noise variance in shot-noise units.
    pub fn electronic_variance(&self) -> f64 {
        10f64.powf(self.electronic_noise_db / 10.0)
    }

    /// Ratio of apparent to true frequencies.
    pub fn clock_ratio(&self) -> f64 {
        1.0 + self.clock_ppm * 1e-6
    }

    pub fn validate(&self, pilot_offsets: &[f64]) -> Result<(), SimError> {
        if !(8..=24).contains(&self.adc_bits) {
            return Err(SimError::InvalidModel(format!("adc_bits {}", self.adc_bits)));
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(SimError::InvalidModel(format!("detector_efficiency {}", self.detector_efficiency)));
        }
        if !(self.lo_detuning > 0.0) || !(self.lo_linewidth >= 0.0) || !(self.signal_bandwidth > 0.0) {
            return Err(SimError::InvalidModel("detuning, linewidth and bandwidth must be positive".into()));
        }
        if !(self.clock_ppm.abs() < 1e3) || self.electronic_noise_db.is_nan() {
            return Err(SimError::InvalidModel("clock offset or electronic noise out of range".into()));
        }
        let max_pilot = pilot_offsets.iter().fold(0.0f64, |m, f| m.max(f.abs()));
        let needed = 2.0 * (self.lo_detuning + max_pilot + self.signal_bandwidth);
        if !(self.adc_rate > needed) {
            return Err(SimError::Aliasing { rate: self.adc_rate, needed });
        }
        for &f in pilot_offsets {
            if f.abs() <= self.signal_bandwidth || self.lo_detuning + f < 1e6 {
                return Err(SimError::PilotCollision(f));
            }
        }
        Ok(())
    }

    fn record(&self, p: &mut Provenance) {
        p.insert("rx.lo_detuning".into(), self.lo_detuning.to_string());
        p.insert("rx.lo_linewidth".into(), self.lo_linewidth.to_string());
        p.insert("rx.adc_rate".into(), self.adc_rate.to_string());
        p.insert("rx.adc_bits".into(), self.adc_bits.to_string());
        p.insert("rx.clock_ppm".into(), self.clock_ppm.to_string());
        p.insert("rx.electronic_noise_db".into(), self.electronic_noise_db.to_string());
        p.insert("rx.detector_efficiency".into(), self.detector_efficiency.to_string());
        p.insert("rx.signal_bandwidth".into(), self.signal_bandwidth.to_string());
    }
}

/// Mid-tread quantizer with full scale 8× the trace RMS. Returns the codes and
/// the LSB size.
pub fn quantize(x: &[f64], bits: u16) -> (Vec<i32>, f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    let rms = if rms > 0.0 { rms } else { 1.0 };
    let half = 1i64 << (bits - 1);
    let lsb = 8.0 * rms / half as f64;
    let codes = x.iter().map(|v| ((v / lsb).round() as i64).clamp(-half, half - 1) as i32).collect();
    (codes, lsb)
}

/// A detected trace plus the realized LO phase-noise path (radians, one value
/// per ADC sample, excluding the deterministic 2πΔt ramp).
#[derive(Debug, Clone)]
pub struct Detection {
    pub trace: RawTrace,
    pub lo_phase: Vec<f64>,
}

/// Photocurrent I = Re[E·e^{i(2πΔt + φ_LO)}] per polarization, with detector
/// efficiency, electronic noise, receiver clock skew and quantization.
pub fn heterodyne_detect(field: &PolarizedField, rx: &ReceiverModel, seed: u64) -> Result<Detection, SimError> {
    let offsets: Vec<f64> = field.tones_x.iter().map(|t| t.offset).collect();
    rx.validate(&offsets)?;
    if (field.rate - rx.adc_rate).abs() > 1e-9 * rx.adc_rate {
        return Err(SimError::InvalidModel(format!("field rate {} differs from ADC rate {}", field.rate, rx.adc_rate)));
    }
    let n = field.len();
    let ratio = rx.clock_ratio();
    let mut rng_lo = seed::rng(seed::derive(seed, "lo-phase", 0));
    let step_std = (2.0 * PI * rx.lo_linewidth * ratio / rx.adc_rate).sqrt();
    let phi0 = rng_lo.gen_range(0.0..2.0 * PI);
    let mut lo_phase = Vec::with_capacity(n);
    let mut phi = phi0;
    for _ in 0..n {
        lo_phase.push(phi);
        phi += step_std * rng_lo.sample::<f64, _>(StandardNormal);
    }
    let eta = rx.detector_efficiency;
    let (se, sv) = (eta.sqrt(), (1.0 - eta).sqrt());
    let el_std = rx.electronic_variance().sqrt();
    let lo_cycles = rx.lo_detuning * ratio / rx.adc_rate;
    let mut provenance = field.provenance.clone();
    rx.record(&mut provenance);
    provenance.insert("truth.clock_ratio".into(), ratio.to_string());
    provenance.insert("truth.apparent_detuning".into(), (rx.lo_detuning * ratio).to_string());
    provenance.insert("truth.lo_phase0".into(), phi0.to_string());
    provenance.insert("seed.detect".into(), seed.to_string());
    let mut channels = Vec::new();
    for c in 0..rx.channels() {
        let (src, tones): (&[C64], &[Tone]) = if c == 0 { (&field.x, &field.tones_x) } else { (&field.y, &field.tones_y) };
        let resampled;
        let src = if ratio != 1.0 {
            resampled = spectral::resample(src, ratio);
            &resampled[..]
        } else {
            src
        };
        let mut rng_v = seed::rng(seed::derive(seed, "detector-vacuum", c as u64));
        let mut rng_e = seed::rng(seed::derive(seed, "electronic", c as u64));
        let mut tone_ramps: Vec<(Phasor, C64)> = tones
            .iter()
            .map(|t| (Phasor::new((rx.lo_detuning + t.offset) * ratio / rx.adc_rate), t.amp * se))
            .collect();
        let mut current = Vec::with_capacity(n);
        for ((k, s), ramp) in src.iter().enumerate().zip(Phasor::new(lo_cycles)) {
            let v = if sv > 0.0 {
                C64::new(rng_v.sample::<f64, _>(StandardNormal), rng_v.sample::<f64, _>(StandardNormal)) * sv
            } else {
                C64::new(0.0, 0.0)
            };
            let noise = C64::from_polar(1.0, lo_phase[k]);
            let mut i = ((s * se + v) * ramp * noise).re;
            for (tr, a) in tone_ramps.iter_mut() {
                i += (*a * tr.next().unwrap() * noise).re;
            }
            if el_std > 0.0 {
                i += el_std * rng_e.sample::<f64, _>(StandardNormal);
            }
            current.push(i);
        }
        let (codes, lsb) = quantize(&current, rx.adc_bits);
        provenance.insert(format!("lsb.{c}"), lsb.to_string());
        channels.push(codes);
    }
    let trace = RawTrace { channels, sample_rate: rx.adc_rate, bit_depth: rx.adc_bits, metadata: provenance };
    Ok(Detection { trace, lo_phase })
}

/// (vacuum trace, electronic-noise trace) for shot-noise calibration.
pub fn calibration_traces(rx: &ReceiverModel, duration: f64, seed: u64) -> Result<(RawTrace, RawTrace), SimError> {
    rx.validate(&[])?;
    let n = (duration * rx.adc_rate).round() as usize;
    if n < 1 << 12 {
        return Err(SimError::TooShort { samples: n, why: "calibration needs at least 2^12 samples".into() });
    }
    let el_std = rx.electronic_variance().sqrt();
    let mut out = Vec::new();
    for (kind, shot) in [("vacuum", 1.0), ("electronic", 0.0)] {
        let mut meta = Provenance::new();
        rx.record(&mut meta);
        meta.insert("calibration.kind".into(), kind.into());
        meta.insert("seed.calibration".into(), seed.to_string());
        let mut channels = Vec::new();
        for c in 0..rx.channels() {
            let mut rng = seed::rng(seed::derive(seed, kind, c as u64));
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    shot * a + el_std * b
                })
                .collect();
            let (codes, lsb) = quantize(&x, rx.adc_bits);
            meta.insert(format!("lsb.{c}"), lsb.to_string());
            channels.push(codes);
        }
        out.push(RawTrace { channels, sample_rate: rx.adc_rate, bit_depth: rx.adc_bits, metadata: meta });
    }
    let el = out.pop().unwrap();
    let vac = out.pop().unwrap();
    Ok((vac, el))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizer_is_mid_tread_and_clamped() {
        let mut x = vec![0.0; 100];
        x[1] = 1.0;
        x[2] = -1.0;
        x[3] = 100.0; // > 8× RMS
        let (q, lsb) = quantize(&x, 8);
        assert_eq!(q[0], 0);
        assert_eq!(q[1], -q[2]);
        assert_eq!(q[3], 127);
        assert!((lsb - 8.0 * (10002.0f64 / 100.0).sqrt() / 128.0).abs() < 1e-12);
    }

    #[test]
    fn aliasing_rejected() {
        let rx = ReceiverModel { adc_rate: 400e6, ..Default::default() };
        assert!(matches!(rx.validate(&[30e6]), Err(SimError::Aliasing { .. })));
    }

    #[test]
    fn pilot_inside_signal_band_rejected() {
        let rx = ReceiverModel::default();
        assert!(matches!(rx.validate(&[10e6]), Err(SimError::PilotCollision(_))));
    }
}
