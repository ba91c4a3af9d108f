//! Run configuration: a preset scenario, overrides on top of it, and the
//! sweep and key-rate settings. Unknown keys anywhere are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sqzrx::scenario::Scenario;
use sqzrx::simkit::JonesChannel;

use crate::error::{CliError, Result};

pub const PRESETS: [&str; 4] = ["10km", "10km-single", "rf-het", "desk"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Setup {
    /// Trusted-detector model taken from the scenario and the reconstruction
    /// records.
    #[default]
    Scenario,
    /// Published trusted-detector parameters.
    Documented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    #[default]
    Lab1,
    Lab2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSweep {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QkdConfig {
    pub setup: Setup,
    pub betas: Vec<f64>,
    pub reference: Reference,
    pub source_untrusted_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_sweep: Option<BetaSweep>,
}

impl Default for QkdConfig {
    fn default() -> Self {
        QkdConfig {
            setup: Setup::Scenario,
            betas: vec![1.0, 0.95],
            reference: Reference::Lab1,
            source_untrusted_fraction: 0.0,
            beta_sweep: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SweepBase {
    /// Single-detector bench with one 40 MHz pilot and a 10 MHz source.
    #[default]
    RfHet,
    /// The configured scenario, single receiver.
    Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub base: SweepBase,
    pub detunings_mhz: Vec<f64>,
    pub frames: usize,
    pub frame_samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            base: SweepBase::RfHet,
            detunings_mhz: vec![18.0, 40.0, 70.0, 100.0, 135.0, 167.0],
            frames: 1,
            frame_samples: Scenario::default().frame_samples,
        }
    }
}

/// Top-level keys as written by the user; `scenario` holds overrides only.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    preset: Option<String>,
    jobs: Option<usize>,
    scenario: Option<toml::Table>,
    sweep: Option<SweepConfig>,
    qkd: Option<QkdConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: String,
    /// Worker threads for frame-parallel stages.
    pub jobs: usize,
    pub scenario: Scenario,
    pub sweep: SweepConfig,
    pub qkd: QkdConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            preset: "10km".into(),
            jobs: 1,
            scenario: preset("10km").expect("known preset"),
            sweep: SweepConfig::default(),
            qkd: QkdConfig::default(),
        }
    }
}

/// The "10km" preset is the two-party link: a short local arm to Lab 1 and
/// the 0.47 dB campus fiber to Lab 2. Both labs keep the pilot-referenced
/// frame, since per-lab decorrelation would rotate them independently.
pub fn preset(name: &str) -> Result<Scenario> {
    let s = match name {
        "10km" => {
            let mut s = Scenario::ten_km();
            s.lab1 = Some(JonesChannel { loss_db: 0.25, ..JonesChannel::default() });
            s.channel.loss_db = 0.47;
            s.dsp.rotate = false;
            s.dsp.psd_nfft = 1024;
            s
        }
        "10km-single" => Scenario { dsp: with_psd(Scenario::ten_km().dsp), ..Scenario::ten_km() },
        "rf-het" => {
            let s = Scenario::rf_het(200e6);
            Scenario { dsp: with_psd(s.dsp.clone()), ..s }
        }
        "desk" => {
            let s = Scenario::desk().map_err(CliError::sim)?;
            Scenario { dsp: with_psd(s.dsp.clone()), ..s }
        }
        other => {
            return Err(CliError::Config(format!("unknown preset {other:?}; expected one of {}", PRESETS.join(", "))))
        }
    };
    Ok(s)
}

fn with_psd(mut d: sqzrx::scenario::DspTuning) -> sqzrx::scenario::DspTuning {
    d.psd_nfft = 1024;
    d
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let name = raw.preset.unwrap_or_else(|| "10km".into());
        let base = preset(&name)?;
        let scenario = match raw.scenario {
            None => base,
            Some(over) => {
                let mut table = toml::Table::try_from(&base).map_err(|e| CliError::Config(e.to_string()))?;
                merge(&mut table, over);
                Scenario::deserialize(toml::Value::Table(table))
                    .map_err(|e| CliError::Config(format!("[scenario]: {e}")))?
            }
        };
        let cfg = RunConfig {
            seed: raw.seed.unwrap_or(1),
            preset: name,
            jobs: raw.jobs.unwrap_or(1),
            scenario,
            sweep: raw.sweep.unwrap_or_default(),
            qkd: raw.qkd.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().map_err(CliError::sim)?;
        if self.scenario.frames == 0 {
            return Err(CliError::Config("scenario.frames must be ≥ 1".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Config("jobs must be ≥ 1".into()));
        }
        if self.sweep.frames == 0 || self.sweep.detunings_mhz.is_empty() {
            return Err(CliError::Config("sweep needs at least one detuning and one frame".into()));
        }
        if !(0.0..=1.0).contains(&self.qkd.source_untrusted_fraction) {
            return Err(CliError::Config("qkd.source_untrusted_fraction must lie in [0, 1]".into()));
        }
        for &b in &self.qkd.betas {
            sqzrx::qkd::KeyScenario::new(b).map_err(CliError::qkd)?;
        }
        if let Some(s) = &self.qkd.beta_sweep {
            if s.points < 2 {
                return Err(CliError::Config("qkd.beta_sweep.points must be ≥ 2".into()));
            }
            for b in [s.from, s.to] {
                sqzrx::qkd::KeyScenario::new(b).map_err(CliError::qkd)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn typos_are_rejected_at_every_level() {
        for text in ["sead = 3", "[scenario]\nframe_sampels = 10", "[scenario.receiver]\nadc_rat = 1e9", "[qkd]\nbeta = [1.0]"] {
            let e = RunConfig::parse(text).unwrap_err();
            assert!(matches!(e, CliError::Config(_)), "{text}: {e}");
        }
    }

    #[test]
    fn overrides_merge_into_the_preset() {
        let c = RunConfig::parse("preset = \"rf-het\"\n[scenario.receiver]\nlo_detuning = 1e8\n").unwrap();
        assert_eq!(c.scenario.receiver.lo_detuning, 1e8);
        assert_eq!(c.scenario.pilots.frequencies, vec![40e6]);
        assert!(!c.scenario.receiver.polarization_diverse);
    }

    #[test]
    fn resolved_config_round_trips() {
        for p in PRESETS {
            let c = RunConfig::parse(&format!("preset = \"{p}\"\nseed = 7")).unwrap();
            assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c, "{p}");
        }
    }

    #[test]
    fn zero_length_frames_and_bad_beta_are_config_errors() {
        assert!(matches!(RunConfig::parse("[scenario]\nframe_samples = 0"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[qkd]\nbetas = [1.2]"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("preset = \"20km\""), Err(CliError::Config(_))));
    }
}
