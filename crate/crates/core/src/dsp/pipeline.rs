//! Frame reconstruction: trace → shot-noise-normalized quadrature ensemble.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{
    clock_recover, demodulate, estimate_pilot_in_spectrum, mode_filter, polarization_recover, rotate_decorrelate,
    to_analytic_spectrum, ukf_phase_track, welch_psd, AnalyticSignal, ClockModifier, DspError, PilotEstimate,
    PolarizationEstimate, Psd,
};
use crate::ensemble::{db, Normalization, QuadratureEnsemble};
use crate::simkit::RawTrace;
use crate::spectral::{self, Phasor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    /// Transmitted pilot offsets from the signal carrier (Hz).
    pub pilot_offsets: Vec<f64>,
    /// Nominal LO detuning used to place the pilot search windows (Hz).
    pub lo_detuning: f64,
    pub search_halfwidth: f64,
    /// Half-width of the band extracted around each pilot (Hz).
    pub pilot_band_halfwidth: f64,
    pub samples_per_state: usize,
    /// Apply the decorrelating rotation.
    pub rotate: bool,
    /// Welch segment length for quadrature PSDs (0 disables).
    pub psd_nfft: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            pilot_offsets: vec![30e6, 120e6],
            lo_detuning: 200e6,
            search_halfwidth: 2e6,
            pilot_band_halfwidth: 5e6,
            samples_per_state: 40,
            rotate: true,
            psd_nfft: 0,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.pilot_offsets.len() > 2 {
            return Err(DspError::BadInput("at most two pilots".into()));
        }
        if self.pilot_offsets.len() == 2 && self.pilot_offsets[0] == self.pilot_offsets[1] {
            return Err(DspError::BadInput("pilot offsets must differ".into()));
        }
        if self.samples_per_state == 0 || !(self.search_halfwidth > 0.0) || !(self.pilot_band_halfwidth > 0.0) {
            return Err(DspError::BadInput("samples_per_state and pilot bandwidths must be positive".into()));
        }
        Ok(())
    }
}

/// Vacuum and electronic-noise levels of one detector, measured through the
/// same down-conversion and mode filter as the signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCalibration {
    /// Per-quadrature variance of raw vacuum modes.
    pub vacuum_mode_var: f64,
    pub electronic_mode_var: f64,
    /// Mean |b|² of the vacuum baseband.
    pub vacuum_baseband_power: f64,
    pub vacuum_psd: Option<Psd>,
    pub electronic_psd: Option<Psd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub channels: Vec<ChannelCalibration>,
    pub states: usize,
}

impl Calibration {
    /// Electronic-noise share of the vacuum mode variance, per channel.
    pub fn electronic_fraction(&self, c: usize) -> f64 {
        self.channels[c].electronic_mode_var / self.channels[c].vacuum_mode_var
    }

    /// Calibration seen by the X output of the polarization inverse, whose
    /// weights on the two detectors are cos²θ and sin²θ.
    fn mixed(&self, theta: f64) -> Mixed {
        if self.channels.len() == 1 {
            let c = &self.channels[0];
            return Mixed {
                vac: c.vacuum_mode_var,
                el: c.electronic_mode_var,
                vac_bb_x: c.vacuum_baseband_power,
                vac_bb_y: c.vacuum_baseband_power,
            };
        }
        let (s, c) = theta.sin_cos();
        let (a, b) = (&self.channels[0], &self.channels[1]);
        Mixed {
            vac: c * c * a.vacuum_mode_var + s * s * b.vacuum_mode_var,
            el: c * c * a.electronic_mode_var + s * s * b.electronic_mode_var,
            vac_bb_x: c * c * a.vacuum_baseband_power + s * s * b.vacuum_baseband_power,
            vac_bb_y: s * s * a.vacuum_baseband_power + c * c * b.vacuum_baseband_power,
        }
    }

    fn mixed_psd(&self, theta: f64, el: bool) -> Option<Psd> {
        let pick = |c: &ChannelCalibration| if el { c.electronic_psd.clone() } else { c.vacuum_psd.clone() };
        let first = pick(&self.channels[0])?;
        if self.channels.len() == 1 {
            return Some(first);
        }
        let second = pick(&self.channels[1])?;
        let (s, c) = theta.sin_cos();
        let values = first.values.iter().zip(&second.values).map(|(a, b)| c * c * a + s * s * b).collect();
        Some(Psd { values, ..first })
    }
}

/// Samples of timing drift over a frame below which resampling is skipped.
const TIMING_DRIFT_LIMIT: f64 = 0.05;

struct Mixed {
    vac: f64,
    el: f64,
    vac_bb_x: f64,
    vac_bb_y: f64,
}

fn baseband_of(x: &[f64], rate: f64, carrier: f64) -> Result<Vec<C64>, DspError> {
    if x.len() < super::MIN_TRACE {
        return Err(DspError::TooShort { samples: x.len(), why: "frames need 2^12 samples".into() });
    }
    let mut s = spectral::fft_real(x);
    to_analytic_spectrum(&mut s);
    spectral::ifft(&mut s);
    Ok(demodulate(&AnalyticSignal { samples: s, sample_rate: rate }, carrier))
}

/// Averages of (x², p²) over an ensemble, with the sample mean removed.
fn quad_var(e: &QuadratureEnsemble) -> f64 {
    let (vx, vp, _) = e.moments();
    0.5 * (vx + vp)
}

fn quadrature_psd(bb: &[C64], nfft: usize, rate: f64) -> Result<(Psd, Psd), DspError> {
    let re: Vec<f64> = bb.iter().map(|v| v.re).collect();
    let px = welch_psd(&re, nfft, rate)?;
    let im: Vec<f64> = bb.iter().map(|v| v.im).collect();
    let pp = welch_psd(&im, nfft, rate)?;
    Ok((px, pp))
}

/// Calibrates each detector from vacuum and electronic-noise traces, processed
/// in chunks of `chunk` samples exactly as signal frames are.
pub fn calibrate(vacuum: &RawTrace, electronic: &RawTrace, cfg: &DspConfig, chunk: usize) -> Result<Calibration, DspError> {
    cfg.validate()?;
    if vacuum.channels.len() != electronic.channels.len() {
        return Err(DspError::BadInput("calibration traces have different channel counts".into()));
    }
    let rate = vacuum.sample_rate;
    let chunk = chunk.min(vacuum.len()).min(electronic.len());
    let mut channels = Vec::new();
    let mut states = 0;
    for c in 0..vacuum.channels.len() {
        let mut stats = [(0.0, 0usize, 0.0, 0usize, None::<Psd>), (0.0, 0, 0.0, 0, None)];
        for (slot, trace) in [vacuum, electronic].into_iter().enumerate() {
            let analog = trace.analog(c);
            for piece in analog.chunks_exact(chunk) {
                let bb = baseband_of(piece, rate, cfg.lo_detuning)?;
                let e = mode_filter(&bb, cfg.samples_per_state, rate)?;
                let st = &mut stats[slot];
                st.0 += quad_var(&e) * e.len() as f64;
                st.1 += e.len();
                st.2 += bb.iter().map(|v| v.norm_sqr()).sum::<f64>();
                st.3 += bb.len();
                if cfg.psd_nfft > 0 {
                    let (px, pp) = quadrature_psd(&bb, cfg.psd_nfft, rate)?;
                    let mean: Vec<f64> = px.values.iter().zip(&pp.values).map(|(a, b)| 0.5 * (a + b)).collect();
                    st.4 = Some(match st.4.take() {
                        None => Psd { values: mean, ..px },
                        Some(mut acc) => {
                            acc.values.iter_mut().zip(&mean).for_each(|(a, m)| *a += m);
                            acc.segments += px.segments;
                            acc
                        }
                    });
                }
            }
        }
        let pieces = |n: usize| (n / chunk).max(1) as f64;
        let finish = |p: Option<Psd>, k: f64| {
            p.map(|mut p| {
                p.values.iter_mut().for_each(|v| *v /= k);
                p
            })
        };
        let [v, e] = stats;
        if v.1 == 0 || e.1 == 0 {
            return Err(DspError::TooShort { samples: chunk, why: "calibration traces shorter than one chunk".into() });
        }
        states = states.max(v.1);
        channels.push(ChannelCalibration {
            vacuum_mode_var: v.0 / v.1 as f64,
            electronic_mode_var: e.0 / e.1 as f64,
            vacuum_baseband_power: v.2 / v.3 as f64,
            vacuum_psd: finish(v.4, pieces(vacuum.len())),
            electronic_psd: finish(e.4, pieces(electronic.len())),
        });
    }
    Ok(Calibration { channels, states })
}

#[derive(Debug, Clone)]
pub struct StageEnsembles {
    pub post_frequency: QuadratureEnsemble,
    pub post_phase: QuadratureEnsemble,
    pub post_rotation: QuadratureEnsemble,
}

#[derive(Debug, Clone)]
pub struct FramePsd {
    pub x: Psd,
    pub p: Psd,
    pub vacuum: Psd,
    pub electronic: Psd,
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub carrier: f64,
    pub pilots: Vec<PilotEstimate>,
    pub clock: ClockModifier,
    pub polarization: Option<PolarizationEstimate>,
    pub residual_y_db: Option<f64>,
    /// Mean pilot power left after phase correction, per pilot, in units of
    /// the vacuum baseband power.
    pub pilot_power: Vec<f64>,
    /// UKF phase estimate at the pilot track times.
    pub phase_estimate: Vec<f64>,
    /// Phase of the first pilot after tracking, removed from the signal.
    pub reference_phase: Option<f64>,
    pub phi_tilde: Option<f64>,
    /// Shot-noise units, electronic noise still included.
    pub ensemble: QuadratureEnsemble,
    pub electronic_fraction: f64,
    pub stages: Option<StageEnsembles>,
    pub psd: Option<FramePsd>,
}

impl FrameResult {
    /// Variance with trusted electronic noise removed: (v − e)/(1 − e).
    pub fn corrected(&self, v: f64) -> f64 {
        (v - self.electronic_fraction) / (1.0 - self.electronic_fraction)
    }

    pub fn squeezing_db(&self) -> f64 {
        db(self.corrected(self.ensemble.moments().0))
    }

    pub fn antisqueezing_db(&self) -> f64 {
        db(self.corrected(self.ensemble.moments().1))
    }

    pub fn summary(&self, frame: usize) -> FrameSummary {
        let (vx, vp, cxp) = self.ensemble.moments();
        FrameSummary {
            frame,
            carrier_hz: self.carrier,
            pilot_frequencies_hz: self.pilots.iter().map(|p| p.frequency).collect(),
            pilot_snr_db: self.pilots.iter().map(|p| p.snr_db).collect(),
            clock_ratio: self.clock.ratio,
            theta: self.polarization.map(|p| p.theta),
            phi: self.polarization.map(|p| p.phi),
            residual_y_db: self.residual_y_db,
            phi_tilde: self.phi_tilde,
            states: self.ensemble.len(),
            var_x: vx,
            var_p: vp,
            cov_xp: cxp,
            squeezing_db: self.squeezing_db(),
            antisqueezing_db: self.antisqueezing_db(),
        }
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last];
    }
    let d = times[1] - times[0];
    let i = ((t - times[0]) / d).floor() as usize;
    let i = i.min(last - 1);
    let w = (t - times[i]) / (times[i + 1] - times[i]);
    values[i] * (1.0 - w) + values[i + 1] * w
}

fn snu(raw: &QuadratureEnsemble, vac: f64) -> QuadratureEnsemble {
    raw.scaled(1.0 / vac.sqrt(), Normalization::ShotNoiseUnits)
}

/// Runs the full chain on one frame:
/// pilot search → clock ratio → carrier → down-conversion → polarization
/// inverse → UKF phase correction → pilot subtraction → timing resampling →
/// boxcar modes → shot-noise normalization → decorrelating rotation.
pub fn reconstruct_frame(
    trace: &RawTrace,
    cal: &Calibration,
    cfg: &DspConfig,
    keep_stages: bool,
) -> Result<FrameResult, DspError> {
    cfg.validate()?;
    trace.validate().map_err(|e| DspError::BadInput(e.to_string()))?;
    if trace.channels.len() != cal.channels.len() {
        return Err(DspError::BadInput("calibration and trace channel counts differ".into()));
    }
    let n = trace.len();
    if n < super::MIN_TRACE {
        return Err(DspError::TooShort { samples: n, why: "frames need 2^12 samples".into() });
    }
    let rate = trace.sample_rate;
    let mut specs: Vec<Vec<C64>> = (0..trace.channels.len()).map(|c| spectral::fft_real(&trace.analog(c))).collect();

    // pilots: take each from the detector where it is strongest
    let mut pilots = Vec::new();
    for &off in &cfg.pilot_offsets {
        let approx = cfg.lo_detuning + off;
        let mut best: Option<PilotEstimate> = None;
        let mut last_err = None;
        for s in &specs {
            match estimate_pilot_in_spectrum(s, rate, 2.0 / n as f64, approx, cfg.search_halfwidth, cfg.pilot_band_halfwidth)
            {
                Ok(p) if best.as_ref().is_none_or(|b| p.amplitude > b.amplitude) => best = Some(p),
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
        }
        pilots.push(best.ok_or_else(|| last_err.unwrap())?);
    }
    let clock = if pilots.len() == 2 {
        clock_recover(&pilots[0], &pilots[1], cfg.pilot_offsets[0], cfg.pilot_offsets[1])?
    } else {
        ClockModifier::IDENTITY
    };
    let carrier = match pilots.first() {
        Some(p) => p.frequency - cfg.pilot_offsets[0] * clock.ratio,
        None => cfg.lo_detuning,
    };

    let mut bbs = Vec::new();
    for mut s in specs.drain(..) {
        to_analytic_spectrum(&mut s);
        spectral::ifft(&mut s);
        bbs.push(demodulate(&AnalyticSignal { samples: s, sample_rate: rate }, carrier));
    }
    let (mut x, polarization, residual_y_db, theta) = if bbs.len() == 2 {
        let by = bbs.pop().unwrap();
        let bx = bbs.pop().unwrap();
        let r = polarization_recover(&bx, &by, 1.0)?;
        let vac_y = cal.mixed(r.estimate.theta).vac_bb_y;
        (r.x, Some(r.estimate), Some(r.residual_y_db - 10.0 * vac_y.log10()), r.estimate.theta)
    } else {
        (bbs.pop().unwrap(), None, None, 0.0)
    };
    let m = cal.mixed(theta);
    let sps = cfg.samples_per_state;
    let post_frequency = if keep_stages { Some(snu(&mode_filter(&x, sps, rate)?, m.vac)) } else { None };

    let mut phase_estimate = Vec::new();
    let mut reference_phase = None;
    if let Some(p) = pilots.first() {
        let snr = 10f64.powf(p.snr_db / 10.0);
        let r = 0.5 / snr;
        let d: Vec<f64> = p.phase_track.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
        let q = (var - 2.0 * r).max(0.1 * var).max(1e-12);
        phase_estimate = ukf_phase_track(&p.phase_track, q, r)?;
        for (k, v) in x.iter_mut().enumerate() {
            *v *= C64::from_polar(1.0, -interpolate(&p.track_times, &phase_estimate, k as f64));
        }
        // the tracked phase is relative; the pilot's own phase fixes the
        // absolute reference so that every frame and receiver shares one
        // quadrature frame
        let cyc = (p.frequency - carrier) / rate;
        let a: C64 = x.iter().zip(Phasor::new(-cyc)).map(|(v, t)| v * t).sum::<C64>();
        let turn = C64::from_polar(1.0, -a.arg());
        x.iter_mut().for_each(|v| *v *= turn);
        reference_phase = Some(a.arg());
    }
    let post_phase = if keep_stages { Some(snu(&mode_filter(&x, sps, rate)?, m.vac)) } else { None };

    let mut pilot_power = Vec::new();
    for p in &pilots {
        let cyc = (p.frequency - carrier) / rate;
        let a: C64 = x.iter().zip(Phasor::new(-cyc)).map(|(v, t)| v * t).sum::<C64>() / n as f64;
        for (v, t) in x.iter_mut().zip(Phasor::new(cyc)) {
            *v -= a * t;
        }
        pilot_power.push(a.norm_sqr() / m.vac_bb_x);
    }

    // resample only when the accumulated timing drift is a visible fraction
    // of a sample
    if (clock.ratio - 1.0).abs() * n as f64 > TIMING_DRIFT_LIMIT {
        x = spectral::resample(&x, 1.0 / clock.ratio);
    }
    let raw = mode_filter(&x, sps, rate)?;
    let mut ensemble = snu(&raw, m.vac);
    let mut phi_tilde = None;
    if cfg.rotate {
        match rotate_decorrelate(&ensemble) {
            Ok((rot, a)) => {
                ensemble = rot;
                phi_tilde = Some(a);
            }
            Err(DspError::AmbiguousRotation(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let psd = if cfg.psd_nfft > 0 {
        let turn = C64::from_polar(1.0, -phi_tilde.unwrap_or(0.0));
        x.iter_mut().for_each(|v| *v *= turn);
        let (px, pp) = quadrature_psd(&x, cfg.psd_nfft, rate)?;
        match (cal.mixed_psd(theta, false), cal.mixed_psd(theta, true)) {
            (Some(vacuum), Some(electronic)) => Some(FramePsd { x: px, p: pp, vacuum, electronic }),
            _ => None,
        }
    } else {
        None
    };
    let stages = match (post_frequency, post_phase) {
        (Some(post_frequency), Some(post_phase)) => {
            Some(StageEnsembles { post_frequency, post_phase, post_rotation: ensemble.clone() })
        }
        _ => None,
    };
    Ok(FrameResult {
        carrier,
        pilots,
        clock,
        polarization,
        residual_y_db,
        pilot_power,
        phase_estimate,
        reference_phase,
        phi_tilde,
        ensemble,
        electronic_fraction: m.el / m.vac,
        stages,
        psd,
    })
}

/// Per-frame line of the reconstruction record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub frame: usize,
    pub carrier_hz: f64,
    pub pilot_frequencies_hz: Vec<f64>,
    pub pilot_snr_db: Vec<f64>,
    pub clock_ratio: f64,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub residual_y_db: Option<f64>,
    pub phi_tilde: Option<f64>,
    pub states: usize,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
    pub squeezing_db: f64,
    pub antisqueezing_db: f64,
}

/// Structured-text record of a reconstruction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub electronic_fraction: f64,
    pub mean_squeezing_db: f64,
    pub mean_antisqueezing_db: f64,
    pub frames: Vec<FrameSummary>,
}

impl ReconstructionRecord {
    pub fn new(frames: Vec<FrameSummary>, electronic_fraction: f64) -> Self {
        let k = frames.len().max(1) as f64;
        let mean_squeezing_db = frames.iter().map(|f| f.squeezing_db).sum::<f64>() / k;
        let mean_antisqueezing_db = frames.iter().map(|f| f.antisqueezing_db).sum::<f64>() / k;
        ReconstructionRecord { electronic_fraction, mean_squeezing_db, mean_antisqueezing_db, frames }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("record serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self, DspError> {
        toml::from_str(s).map_err(|e| DspError::BadInput(e.to_string()))
    }
}
