//! Ground-truth simulation of RF-heterodyne detection of squeezed vacuum.
//!
//! Field convention: a complex envelope E = x + ip per polarization, sampled
//! at the ADC rate, with vacuum variance 1 in each quadrature. Pilot tones are
//! carried separately as exact complex exponentials so that clock skew and
//! channel transforms act on them without discretization error.

mod detect;
pub mod theory;
mod trace;

pub use detect::{calibration_traces, heterodyne_detect, quantize, Detection, ReceiverModel};
pub use trace::RawTrace;

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{seed, spectral};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("pump ratio {0} is at or above threshold")]
    AboveThreshold(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{samples} samples cannot support the request: {why}")]
    TooShort { samples: usize, why: String },
    #[error("ADC rate {rate} Hz aliases: needs > {needed} Hz")]
    Aliasing { rate: f64, needed: f64 },
    #[error("pilot at {0} Hz collides with the signal band or the LO")]
    PilotCollision(f64),
    #[error("trace format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) type Provenance = BTreeMap<String, String>;

/// Below-threshold OPO source. `bandwidth_gamma` is the half-linewidth in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqueezerModel {
    pub pump_ratio: f64,
    pub bandwidth_gamma: f64,
    pub escape_efficiency: f64,
    pub rms_phase_noise: f64,
    /// Correlation time of the slow source phase jitter (s).
    pub jitter_time: f64,
}

impl Default for SqueezerModel {
    fn default() -> Self {
        SqueezerModel {
            pump_ratio: 0.35,
            bandwidth_gamma: 40e6,
            escape_efficiency: 0.65,
            rms_phase_noise: 0.0,
            jitter_time: 1e-6,
        }
    }
}

impl SqueezerModel {
    pub fn vacuum() -> Self {
        SqueezerModel { pump_ratio: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.pump_ratio < 1.0) {
            return Err(SimError::AboveThreshold(self.pump_ratio));
        }
        if self.pump_ratio < 0.0 {
            return Err(SimError::InvalidModel(format!("pump_ratio {} < 0", self.pump_ratio)));
        }
        if !(0.0..=1.0).contains(&self.escape_efficiency) {
            return Err(SimError::InvalidModel(format!("escape_efficiency {}", self.escape_efficiency)));
        }
        if !(self.bandwidth_gamma > 0.0) {
            return Err(SimError::InvalidModel("bandwidth_gamma must be positive".into()));
        }
        if !(self.rms_phase_noise >= 0.0) || !(self.jitter_time > 0.0) {
            return Err(SimError::InvalidModel("phase-noise parameters must be non-negative".into()));
        }
        Ok(())
    }

    /// (S₋, S₊) at sideband frequency `f` (Hz).
    pub fn spectrum(&self, f: f64) -> (f64, f64) {
        let x = self.pump_ratio;
        let w = (f / self.bandwidth_gamma).powi(2);
        let k = self.escape_efficiency * 4.0 * x;
        (1.0 - k / ((1.0 + x).powi(2) + w), 1.0 + k / ((1.0 - x).powi(2) + w))
    }

    fn record(&self, p: &mut Provenance) {
        p.insert("squeezer.pump_ratio".into(), self.pump_ratio.to_string());
        p.insert("squeezer.bandwidth_gamma".into(), self.bandwidth_gamma.to_string());
        p.insert("squeezer.escape_efficiency".into(), self.escape_efficiency.to_string());
        p.insert("squeezer.rms_phase_noise".into(), self.rms_phase_noise.to_string());
        p.insert("squeezer.jitter_time".into(), self.jitter_time.to_string());
    }
}

/// Pilot tones. `powers_db` is the SNR of each pilot inside ±`band_halfwidth`
/// around it, relative to the shot noise in that band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotPlan {
    pub frequencies: Vec<f64>,
    pub powers_db: Vec<f64>,
    pub band_halfwidth: f64,
}

impl Default for PilotPlan {
    fn default() -> Self {
        PilotPlan { frequencies: vec![30e6, 120e6], powers_db: vec![30.0, 30.0], band_halfwidth: 5e6 }
    }
}

impl PilotPlan {
    pub fn single(freq: f64) -> Self {
        PilotPlan { frequencies: vec![freq], powers_db: vec![30.0], ..Default::default() }
    }

    pub fn none() -> Self {
        PilotPlan { frequencies: vec![], powers_db: vec![], ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let f = &self.frequencies;
        if f.len() > 2 || f.len() != self.powers_db.len() {
            return Err(SimError::InvalidModel("one or two pilots, each with a power".into()));
        }
        if f.iter().any(|v| *v == 0.0 || !v.is_finite()) || (f.len() == 2 && f[0] == f[1]) {
            return Err(SimError::InvalidModel("pilot frequencies must be distinct and nonzero".into()));
        }
        if !(self.band_halfwidth > 0.0) {
            return Err(SimError::InvalidModel("pilot band must be positive".into()));
        }
        Ok(())
    }

    /// Real-trace power per sample (shot noise = 1) of pilot `i`.
    pub fn power_per_sample(&self, i: usize, rate: f64) -> f64 {
        10f64.powf(self.powers_db[i] / 10.0) * 2.0 * self.band_halfwidth / rate
    }

    /// Complex amplitude a with Re[a·e^{iωt}] carrying `power_per_sample`.
    pub fn amplitude(&self, i: usize, rate: f64) -> f64 {
        (2.0 * self.power_per_sample(i, rate)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JonesChannel {
    pub loss_db: f64,
    pub theta: f64,
    pub phi: f64,
    /// Attenuation seen only by the pilots (an adversarial bias).
    pub pilot_extra_loss_db: f64,
}

impl Default for JonesChannel {
    fn default() -> Self {
        JonesChannel { loss_db: 0.47, theta: 0.0, phi: 0.0, pilot_extra_loss_db: 0.0 }
    }
}

impl JonesChannel {
    pub fn transmissivity(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }

    /// [[cos θ, sin θ·e^{−iφ}], [−sin θ·e^{iφ}, cos θ]]
    pub fn matrix(&self) -> [[C64; 2]; 2] {
        let (s, c) = self.theta.sin_cos();
        [
            [C64::new(c, 0.0), C64::from_polar(s, -self.phi)],
            [-C64::from_polar(s, self.phi), C64::new(c, 0.0)],
        ]
    }

    /// Lossless polarization transform of one (x, y) pair.
    pub fn rotate(&self, x: C64, y: C64) -> (C64, C64) {
        let m = self.matrix();
        (m[0][0] * x + m[0][1] * y, m[1][0] * x + m[1][1] * y)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.loss_db >= 0.0) || !(self.pilot_extra_loss_db >= 0.0) {
            return Err(SimError::InvalidModel("losses must be ≥ 0 dB".into()));
        }
        if !self.theta.is_finite() || !self.phi.is_finite() {
            return Err(SimError::InvalidModel("non-finite channel angle".into()));
        }
        Ok(())
    }
}

/// A deterministic tone at `offset` Hz from the signal carrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub offset: f64,
    pub amp: C64,
}

/// Transmitted X-polarized field: squeezed envelope plus pilots.
#[derive(Debug, Clone)]
pub struct TxField {
    pub signal: Vec<C64>,
    pub tones: Vec<Tone>,
    pub rate: f64,
    pub provenance: BTreeMap<String, String>,
}

/// Field at the receiver, per polarization.
#[derive(Debug, Clone)]
pub struct PolarizedField {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
    pub tones_x: Vec<Tone>,
    pub tones_y: Vec<Tone>,
    pub rate: f64,
    pub provenance: BTreeMap<String, String>,
}

impl PolarizedField {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn complex_normal<R: Rng>(rng: &mut R, std: f64) -> C64 {
    C64::new(rng.sample::<f64, _>(StandardNormal) * std, rng.sample::<f64, _>(StandardNormal) * std)
}

/// Vacuum envelope: independent unit-variance quadratures.
pub fn vacuum_field(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = seed::rng(seed);
    (0..n).map(|_| complex_normal(&mut rng, 1.0)).collect()
}

/// Stationary Gaussian envelope with X-PSD S₋ and P-PSD S₊.
///
/// Each DFT bin pair (k, −k) is drawn jointly: with W white,
/// Z_k = W_k·(√S₋+√S₊)/2 + W*_{−k}·(√S₋−√S₊)/2, which makes x = Re z and
/// p = Im z real processes with the target spectra.
pub fn synthesize_squeezed_field(model: &SqueezerModel, duration: f64, rate: f64, seed: u64) -> Result<Vec<C64>, SimError> {
    model.validate()?;
    let n = (duration * rate).round() as usize;
    if !(duration > 0.0) || n < 1 << 12 {
        return Err(SimError::TooShort { samples: n, why: "need at least 2^12 samples".into() });
    }
    if model.pump_ratio > 0.0 && rate / n as f64 > model.bandwidth_gamma / 4.0 {
        return Err(SimError::TooShort {
            samples: n,
            why: format!("bin spacing {:.3e} Hz does not resolve γ = {:.3e} Hz", rate / n as f64, model.bandwidth_gamma),
        });
    }
    let mut rng = seed::rng(seed);
    let std = (n as f64).sqrt();
    let w: Vec<C64> = (0..n).map(|_| complex_normal(&mut rng, std)).collect();
    let mut z: Vec<C64> = (0..n)
        .map(|k| {
            let (sm, sp) = model.spectrum(spectral::bin_freq(k, n, rate));
            let (a, b) = (sm.max(0.0).sqrt(), sp.sqrt());
            w[k] * (0.5 * (a + b)) + w[(n - k) % n].conj() * (0.5 * (a - b))
        })
        .collect();
    drop(w);
    spectral::ifft(&mut z);
    if model.rms_phase_noise > 0.0 {
        let sigma = model.rms_phase_noise;
        let a = (-1.0 / (rate * model.jitter_time)).exp();
        let kick = sigma * (1.0 - a * a).sqrt();
        let mut theta: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        for v in z.iter_mut() {
            *v *= C64::from_polar(1.0, theta);
            theta = a * theta + kick * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(z)
}

/// Attaches the pilots (X polarization, zero phase) to a synthesized envelope.
pub fn transmit(signal: Vec<C64>, model: &SqueezerModel, pilots: &PilotPlan, rate: f64) -> Result<TxField, SimError> {
    pilots.validate()?;
    let tones = (0..pilots.frequencies.len())
        .map(|i| Tone { offset: pilots.frequencies[i], amp: C64::new(pilots.amplitude(i, rate), 0.0) })
        .collect();
    let mut provenance = Provenance::new();
    model.record(&mut provenance);
    for (i, f) in pilots.frequencies.iter().enumerate() {
        provenance.insert(format!("pilot.{i}.offset"), f.to_string());
        provenance.insert(format!("pilot.{i}.snr_db"), pilots.powers_db[i].to_string());
        provenance.insert(format!("pilot.{i}.power_per_sample"), pilots.power_per_sample(i, rate).to_string());
    }
    provenance.insert("pilot.band_halfwidth".into(), pilots.band_halfwidth.to_string());
    Ok(TxField { signal, tones, rate, provenance })
}

/// Balanced beamsplitter with a fresh vacuum on the dark port:
/// E₁ = (E + v)/√2 and E₂ = (E − v)/√2. Pilots go to both outputs at half power.
pub fn split_balanced(tx: &TxField, seed: u64) -> (TxField, TxField) {
    let mut rng = seed::rng(seed);
    let k = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b): (Vec<C64>, Vec<C64>) = tx
        .signal
        .iter()
        .map(|&s| {
            let v = complex_normal(&mut rng, 1.0);
            ((s + v) * k, (s - v) * k)
        })
        .unzip();
    let tones: Vec<Tone> = tx.tones.iter().map(|t| Tone { offset: t.offset, amp: t.amp * k }).collect();
    let half = |signal, port: &str| {
        let mut provenance = tx.provenance.clone();
        provenance.insert("split.port".into(), port.into());
        TxField { signal, tones: tones.clone(), rate: tx.rate, provenance }
    };
    (half(a, "1"), half(b, "2"))
}

/// Jones rotation of (signal, fresh vacuum) followed by symmetric pure loss.
pub fn apply_channel(tx: &TxField, channel: &JonesChannel, seed: u64) -> Result<PolarizedField, SimError> {
    channel.validate()?;
    let n = tx.signal.len();
    let m = channel.matrix();
    let t = channel.transmissivity();
    let (st, sr) = (t.sqrt(), (1.0 - t).max(0.0).sqrt());
    let mut rng_y = seed::rng(seed::derive(seed, "channel-y-vacuum", 0));
    let mut rng_l = seed::rng(seed::derive(seed, "channel-loss", 0));
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for &s in &tx.signal {
        let v = complex_normal(&mut rng_y, 1.0);
        let (ox, oy) = (m[0][0] * s + m[0][1] * v, m[1][0] * s + m[1][1] * v);
        if sr > 0.0 {
            x.push(ox * st + complex_normal(&mut rng_l, sr));
            y.push(oy * st + complex_normal(&mut rng_l, sr));
        } else {
            x.push(ox);
            y.push(oy);
        }
    }
    let tone_gain = st * 10f64.powf(-channel.pilot_extra_loss_db / 20.0);
    let tones_x = tx.tones.iter().map(|t| Tone { offset: t.offset, amp: m[0][0] * t.amp * tone_gain }).collect();
    let tones_y = tx.tones.iter().map(|t| Tone { offset: t.offset, amp: m[1][0] * t.amp * tone_gain }).collect();
    let mut provenance = tx.provenance.clone();
    provenance.insert("channel.loss_db".into(), channel.loss_db.to_string());
    provenance.insert("channel.theta".into(), channel.theta.to_string());
    provenance.insert("channel.phi".into(), channel.phi.to_string());
    provenance.insert("channel.pilot_extra_loss_db".into(), channel.pilot_extra_loss_db.to_string());
    Ok(PolarizedField { x, y, tones_x, tones_y, rate: tx.rate, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_brackets_vacuum() {
        let m = SqueezerModel { pump_ratio: 0.5, bandwidth_gamma: 10e6, escape_efficiency: 1.0, ..Default::default() };
        for f in [0.0, 1e6, 1e7, 1e8] {
            let (a, b) = m.spectrum(f);
            assert!(a <= 1.0 && b >= 1.0 && a * b >= 1.0 - 1e-12);
        }
        let (a, b) = m.spectrum(0.0);
        assert!((a - (1.0 - 2.0 / 2.25)).abs() < 1e-12 && (b - 9.0).abs() < 1e-12);
    }

    #[test]
    fn above_threshold_rejected() {
        let m = SqueezerModel { pump_ratio: 1.0, ..Default::default() };
        assert!(matches!(synthesize_squeezed_field(&m, 1e-5, 1e9, 1), Err(SimError::AboveThreshold(_))));
    }

    #[test]
    fn jones_matrix_is_unitary() {
        let ch = JonesChannel { theta: 0.7, phi: 1.9, ..Default::default() };
        let m = ch.matrix();
        for i in 0..2 {
            for j in 0..2 {
                let d: C64 = (0..2).map(|k| m[i][k] * m[j][k].conj()).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).norm() < 1e-15);
            }
        }
    }
}
