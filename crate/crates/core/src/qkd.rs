//! Mutual informations, Holevo bounds and secret-key rates of the passive
//! squeezed-state protocol.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{
    self, condition_on_homodyne, reduce, relabel_after_removal, von_neumann_entropy, ArmModel, CovMatrix4,
    DetectorModel, GaussianError, PurificationInput, PurifiedState, Quadrature,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QkdError {
    #[error("reconciliation efficiency {0} outside (0, 1]")]
    BadBeta(f64),
    #[error("correlation {c} not below √(VA·VB) = {bound}")]
    BadCorrelation { c: f64, bound: f64 },
    #[error("loss estimates disagree: pilot {pilot_db:.4} dB vs variance {variance_db:.4} ± {variance_se_db:.4} dB")]
    InconsistentLoss { pilot_db: f64, variance_db: f64, variance_se_db: f64 },
    #[error("invalid loss input: {0}")]
    BadLossInput(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Lab {
    #[default]
    Lab1,
    Lab2,
}

impl Lab {
    fn index(self) -> usize {
        match self {
            Lab::Lab1 => 0,
            Lab::Lab2 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Strategy {
    XOnly,
    POnly,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyScenario {
    pub beta: f64,
    pub reference: Lab,
    pub strategy: Strategy,
}

impl KeyScenario {
    pub fn new(beta: f64) -> Result<Self, QkdError> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(QkdError::BadBeta(beta));
        }
        Ok(KeyScenario { beta, reference: Lab::Lab1, strategy: Strategy::Both })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateReport {
    pub beta: f64,
    pub i_x: f64,
    pub i_p: f64,
    pub chi_full: f64,
    pub chi_given_p: f64,
    pub chi_given_x: f64,
    pub k_x: f64,
    pub k_p: f64,
    pub k_xp: f64,
}

impl KeyRateReport {
    pub fn selected(&self, s: Strategy) -> f64 {
        match s {
            Strategy::XOnly => self.k_x,
            Strategy::POnly => self.k_p,
            Strategy::Both => self.k_xp,
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("serializable")
    }

    pub const CSV_HEADER: [&'static str; 9] =
        ["beta", "I_X", "I_P", "chi_full", "chi_given_P", "chi_given_X", "K_X", "K_P", "K_XP"];

    pub fn csv_row(&self) -> [String; 9] {
        [self.beta, self.i_x, self.i_p, self.chi_full, self.chi_given_p, self.chi_given_x, self.k_x, self.k_p, self.k_xp]
            .map(|v| format!("{v:.9e}"))
    }
}

/// ½·log₂(V_A / (V_A − C²/V_B)) for one quadrature of outcome statistics.
pub fn mutual_information_outcome(outcome: &Matrix4<f64>, q: Quadrature) -> Result<f64, QkdError> {
    let o = q.offset();
    let (va, vb, c) = (outcome[(o, o)], outcome[(2 + o, 2 + o)], outcome[(o, 2 + o)]);
    let bound = (va * vb).sqrt();
    if !(c.abs() < bound) {
        return Err(QkdError::BadCorrelation { c, bound });
    }
    Ok(0.5 * (va / (va - c * c / vb)).log2())
}

/// Mutual information between the labs' outcomes for one quadrature.
///
/// `cov` has electronic noise removed; the trusted electronic noise of each
/// lab (outcome SNU) is added back because the key is distilled from the
/// actual detector outputs.
pub fn mutual_information(cov: &CovMatrix4, q: Quadrature, electronic: [f64; 2]) -> Result<f64, QkdError> {
    mutual_information_outcome(&cov.with_outcome_noise(electronic), q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    None,
    GivenX,
    GivenP,
    GivenBoth,
}

fn eve_entropy(cov: &gaussian::Mat, eve: &[usize]) -> Result<f64, GaussianError> {
    if eve.is_empty() {
        return Ok(0.0);
    }
    von_neumann_entropy(&reduce(cov, eve))
}

/// Eve's entropy after the reference side's listed heterodyne outcomes.
fn conditional_eve_entropy(state: &PurifiedState, reference: Lab, quads: &[Quadrature]) -> Result<f64, GaussianError> {
    let (xport, pport) = state.het_ports[reference.index()];
    let mut cov = state.cov.clone();
    let mut eve = state.eve_modes();
    let mut ports = vec![xport, pport];
    for q in quads {
        let (slot, quad) = match q {
            Quadrature::X => (0, Quadrature::X),
            Quadrature::P => (1, Quadrature::P),
        };
        let mode = ports[slot];
        cov = condition_on_homodyne(&cov, mode, quad);
        eve = relabel_after_removal(&eve, mode);
        ports = ports.iter().map(|&m| if m > mode { m - 1 } else { m }).collect();
    }
    eve_entropy(&cov, &eve)
}

/// Holevo information between Eve and the reference side's outcomes that
/// remain secret after the stated public disclosure.
pub fn holevo_bound(state: &PurifiedState, conditioning: Conditioning, reference: Lab) -> Result<f64, GaussianError> {
    use Quadrature::{P, X};
    let s_xp = conditional_eve_entropy(state, reference, &[X, P])?;
    let v = match conditioning {
        Conditioning::None => conditional_eve_entropy(state, reference, &[])? - s_xp,
        Conditioning::GivenX => conditional_eve_entropy(state, reference, &[X])? - s_xp,
        Conditioning::GivenP => conditional_eve_entropy(state, reference, &[P])? - s_xp,
        Conditioning::GivenBoth => 0.0,
    };
    Ok(v.max(0.0))
}

pub fn key_rates(cov: &CovMatrix4, scenario: &KeyScenario, state: &PurifiedState) -> Result<KeyRateReport, QkdError> {
    if !(scenario.beta > 0.0 && scenario.beta <= 1.0) {
        return Err(QkdError::BadBeta(scenario.beta));
    }
    let el = [state.input.arms[0].detector.electronic, state.input.arms[1].detector.electronic];
    let i_x = mutual_information(cov, Quadrature::X, el)?;
    let i_p = mutual_information(cov, Quadrature::P, el)?;
    let chi_full = holevo_bound(state, Conditioning::None, scenario.reference)?;
    let chi_given_p = holevo_bound(state, Conditioning::GivenP, scenario.reference)?;
    let chi_given_x = holevo_bound(state, Conditioning::GivenX, scenario.reference)?;
    let b = scenario.beta;
    let clamp = |v: f64| if v > 0.0 { v } else { 0.0 };
    Ok(KeyRateReport {
        beta: b,
        i_x,
        i_p,
        chi_full,
        chi_given_p,
        chi_given_x,
        k_x: clamp(b * i_x - chi_given_p),
        k_p: clamp(b * i_p - chi_given_x),
        k_xp: clamp(b * (i_x + i_p) - chi_full),
    })
}

/// Trusted-detector parameters documented for the published covariance.
///
/// Lab 2 is the 0.47 dB campus link; Lab 1's local patch loss, both detector
/// efficiencies and electronic noises are not published and were chosen so the
/// model reproduces the covariance and the realistic-reconciliation row.
pub fn documented_setup() -> PurificationInput {
    PurificationInput {
        arms: [
            ArmModel {
                loss_db: 0.25,
                excess_noise: 0.0,
                fit_excess: false,
                detector: DetectorModel { efficiency: 0.95, electronic: 0.11 },
            },
            ArmModel {
                loss_db: 0.47,
                excess_noise: 0.0,
                fit_excess: true,
                detector: DetectorModel { efficiency: 0.91, electronic: 0.11 },
            },
        ],
        source_untrusted_fraction: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossEstimate {
    pub pilot_db: f64,
    pub variance_db: f64,
    pub variance_se_db: f64,
    /// Pilot estimate inside the variance estimate's ±1 SE interval.
    pub consistent: bool,
}

/// Channel loss from pilot powers (dB) and from anti-squeezed outcome
/// variances measured before/after the channel as (value, SE) in SNU.
pub fn estimate_channel_loss(
    pilot_tx_db: f64,
    pilot_rx_db: f64,
    asq_pre: (f64, f64),
    asq_post: (f64, f64),
) -> Result<LossEstimate, QkdError> {
    if asq_pre.0 <= 1.0 || asq_post.0 <= 1.0 {
        return Err(QkdError::BadLossInput("anti-squeezed variances must exceed vacuum".into()));
    }
    let pilot_db = pilot_tx_db - pilot_rx_db;
    let (pre, post) = (asq_pre.0 - 1.0, asq_post.0 - 1.0);
    let variance_db = 10.0 * (pre / post).log10();
    let k = 10.0 / std::f64::consts::LN_10;
    let variance_se_db = k * ((asq_pre.1 / pre).powi(2) + (asq_post.1 / post).powi(2)).sqrt();
    let diff = (pilot_db - variance_db).abs();
    if diff > 3.0 * variance_se_db {
        return Err(QkdError::InconsistentLoss { pilot_db, variance_db, variance_se_db });
    }
    Ok(LossEstimate { pilot_db, variance_db, variance_se_db, consistent: diff <= variance_se_db })
}
