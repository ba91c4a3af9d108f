//! End-to-end scenarios: one set of source, channel, receiver and DSP
//! parameters, with seeded frame generation.

use serde::{Deserialize, Serialize};

use crate::dsp::{self, Calibration, DspConfig, DspError, FrameResult};
use crate::seed;
use crate::simkit::{
    self, apply_channel, calibration_traces, heterodyne_detect, split_balanced, synthesize_squeezed_field, transmit,
    Detection, JonesChannel, PilotPlan, RawTrace, ReceiverModel, SimError, SqueezerModel,
};

/// DSP settings that are not implied by the pilot plan and receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspTuning {
    pub search_halfwidth: f64,
    pub samples_per_state: usize,
    pub rotate: bool,
    pub psd_nfft: usize,
}

impl Default for DspTuning {
    fn default() -> Self {
        let d = DspConfig::default();
        DspTuning {
            search_halfwidth: d.search_halfwidth,
            samples_per_state: d.samples_per_state,
            rotate: d.rotate,
            psd_nfft: d.psd_nfft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub squeezer: SqueezerModel,
    pub pilots: PilotPlan,
    pub channel: JonesChannel,
    pub receiver: ReceiverModel,
    pub dsp: DspTuning,
    /// ADC samples per frame (2·10⁵ states × 40 samples by default).
    pub frame_samples: usize,
    pub frames: usize,
    /// Calibration trace length in frames.
    pub calibration_frames: usize,
    /// Two-party link: the source is split on a balanced beamsplitter, one
    /// half reaches Lab 1 over this arm and the other reaches Lab 2 over
    /// `channel`. Both labs use a copy of `receiver` with independent noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lab1: Option<JonesChannel>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "10km".into(),
            squeezer: SqueezerModel::default(),
            pilots: PilotPlan::default(),
            channel: JonesChannel::default(),
            receiver: ReceiverModel::default(),
            dsp: DspTuning::default(),
            frame_samples: 8_000_000,
            frames: 4,
            calibration_frames: 2,
            lab1: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

impl Scenario {
    /// Two-pilot, polarization-diverse link of the field trial.
    pub fn ten_km() -> Self {
        Scenario::default()
    }

    /// Single-detector RF-heterodyne bench: one 40 MHz pilot, 10 MHz source.
    pub fn rf_het(detuning: f64) -> Self {
        Scenario {
            name: "rf-het".into(),
            squeezer: SqueezerModel { bandwidth_gamma: 10e6, ..Default::default() },
            pilots: PilotPlan::single(40e6),
            channel: JonesChannel { loss_db: 0.0, ..Default::default() },
            receiver: ReceiverModel { lo_detuning: detuning, polarization_diverse: false, ..Default::default() },
            ..Default::default()
        }
    }

    /// Desk-scale check: 3 dB / 5 dB band-averaged source, 0.47 dB loss and a
    /// rotated polarization.
    pub fn desk() -> Result<Self, SimError> {
        let rx = ReceiverModel::default();
        let squeezer = simkit::theory::squeezer_from_band_average(-3.0, 5.0, 40e6, rx.adc_rate, 40)?;
        Ok(Scenario {
            name: "desk".into(),
            squeezer,
            channel: JonesChannel { loss_db: 0.47, theta: 0.6, phi: 1.1, pilot_extra_loss_db: 0.0 },
            receiver: rx,
            frames: 20,
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if let Some(arm) = &self.lab1 {
            arm.validate()?;
        }
        self.squeezer.validate()?;
        self.pilots.validate()?;
        self.receiver.validate(&self.pilots.frequencies)?;
        if self.frame_samples < self.dsp.samples_per_state * 1000 || self.frame_samples < 1 << 12 {
            return Err(SimError::TooShort { samples: self.frame_samples, why: "frame shorter than 10^3 states".into() });
        }
        if self.calibration_frames == 0 {
            return Err(SimError::InvalidModel("calibration_frames must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.frame_samples as f64 / self.receiver.adc_rate
    }

    pub fn dsp_config(&self) -> DspConfig {
        DspConfig {
            pilot_offsets: self.pilots.frequencies.clone(),
            lo_detuning: self.receiver.lo_detuning,
            search_halfwidth: self.dsp.search_halfwidth,
            pilot_band_halfwidth: self.pilots.band_halfwidth,
            samples_per_state: self.dsp.samples_per_state,
            rotate: self.dsp.rotate,
            psd_nfft: self.dsp.psd_nfft,
        }
    }

    /// Overall transmissivity from source to photocurrent.
    pub fn transmissivity(&self) -> f64 {
        self.channel.transmissivity() * self.receiver.detector_efficiency
    }

    /// Analytic (var X, var P) of the reconstructed modes, shot-noise units,
    /// electronic noise removed.
    pub fn expected_mode_variances(&self) -> (f64, f64) {
        simkit::theory::expected_mode_variances(
            &self.squeezer,
            self.transmissivity(),
            self.receiver.lo_detuning,
            self.receiver.adc_rate,
            self.dsp.samples_per_state,
        )
    }

    /// Frame `index` generated from `master` seed.
    pub fn frame(&self, master: u64, index: usize) -> Result<Detection, SimError> {
        self.validate()?;
        let i = index as u64;
        let rate = self.receiver.adc_rate;
        let sig = synthesize_squeezed_field(&self.squeezer, self.duration(), rate, seed::derive(master, "source", i))?;
        let tx = transmit(sig, &self.squeezer, &self.pilots, rate)?;
        let field = apply_channel(&tx, &self.channel, seed::derive(master, "channel", i))?;
        drop(tx);
        let mut det = heterodyne_detect(&field, &self.receiver, seed::derive(master, "detect", i))?;
        det.trace.metadata.insert("scenario.name".into(), self.name.clone());
        det.trace.metadata.insert("scenario.frame".into(), index.to_string());
        det.trace.metadata.insert("seed.master".into(), master.to_string());
        Ok(det)
    }

    /// Receiver names: one receiver, or Lab 1 and Lab 2 on a two-party link.
    pub fn labs(&self) -> &'static [&'static str] {
        if self.lab1.is_some() {
            &["lab1", "lab2"]
        } else {
            &["rx"]
        }
    }

    /// Frame `index` as seen by every receiver, in [`Scenario::labs`] order.
    pub fn frame_labs(&self, master: u64, index: usize) -> Result<Vec<Detection>, SimError> {
        let Some(arm) = &self.lab1 else {
            return Ok(vec![self.frame(master, index)?]);
        };
        self.validate()?;
        let i = index as u64;
        let rate = self.receiver.adc_rate;
        let sig = synthesize_squeezed_field(&self.squeezer, self.duration(), rate, seed::derive(master, "source", i))?;
        let tx = transmit(sig, &self.squeezer, &self.pilots, rate)?;
        let (tx1, tx2) = split_balanced(&tx, seed::derive(master, "split", i));
        drop(tx);
        let mut out = Vec::with_capacity(2);
        for (k, (half, ch)) in [(tx1, arm), (tx2, &self.channel)].into_iter().enumerate() {
            let lab = self.labs()[k];
            let field = apply_channel(&half, ch, seed::derive(master, &format!("channel-{lab}"), i))?;
            drop(half);
            let mut det = heterodyne_detect(&field, &self.receiver, seed::derive(master, &format!("detect-{lab}"), i))?;
            det.trace.metadata.insert("scenario.name".into(), self.name.clone());
            det.trace.metadata.insert("scenario.frame".into(), index.to_string());
            det.trace.metadata.insert("scenario.lab".into(), lab.into());
            det.trace.metadata.insert("seed.master".into(), master.to_string());
            out.push(det);
        }
        Ok(out)
    }

    /// (vacuum, electronic) calibration traces.
    pub fn calibration_traces(&self, master: u64) -> Result<(RawTrace, RawTrace), SimError> {
        self.calibration_traces_for(master, 0)
    }

    /// Calibration traces of receiver `lab` (index into [`Scenario::labs`]).
    pub fn calibration_traces_for(&self, master: u64, lab: usize) -> Result<(RawTrace, RawTrace), SimError> {
        self.validate()?;
        let duration = self.duration() * self.calibration_frames as f64;
        calibration_traces(&self.receiver, duration, seed::derive(master, "calibration", lab as u64))
    }

    pub fn calibrate(&self, master: u64) -> Result<Calibration, ScenarioError> {
        let (vac, el) = self.calibration_traces(master)?;
        Ok(dsp::calibrate(&vac, &el, &self.dsp_config(), self.frame_samples)?)
    }

    /// Generates and reconstructs frame `index`.
    pub fn run_frame(&self, master: u64, index: usize, cal: &Calibration, keep_stages: bool) -> Result<FrameResult, ScenarioError> {
        let det = self.frame(master, index)?;
        Ok(dsp::reconstruct_frame(&det.trace, cal, &self.dsp_config(), keep_stages)?)
    }
}
