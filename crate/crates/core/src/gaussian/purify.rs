//! Trusted-source purification of the passive two-lab setup.
//!
//! Mode chain: impure squeezed source → balanced splitter (Lab 1 keeps the
//! transmitted port) → per-arm lossy channel with entangling-cloner excess noise
//! (Eve) → per-arm detector inefficiency with electronic noise (trusted) →
//! per-arm heterodyne splitter with a vacuum port (trusted). The heterodyne
//! X outcome is read on the arm mode, P on the vacuum-port mode.

use nalgebra::Matrix4;

use super::{ops, reduce, symplectic_spectrum, CovMatrix4, GaussianError, Mat};
use crate::optim::{levenberg_marquardt, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Trusted,
    Eve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeLabel {
    pub name: String,
    pub party: Party,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Electronic noise in heterodyne-outcome shot-noise units (10^(dB/10)).
    pub electronic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmModel {
    pub loss_db: f64,
    /// Channel-input-referred excess noise (SNU). Used as the starting value
    /// when `fit_excess` is set.
    pub excess_noise: f64,
    pub fit_excess: bool,
    pub detector: DetectorModel,
}

impl ArmModel {
    pub fn transmissivity(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurificationInput {
    pub arms: [ArmModel; 2],
    /// Fraction (in log-transmissivity) of the source impurity attributed to Eve.
    pub source_untrusted_fraction: f64,
}

/// Source and channel parameters solved from the measured covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceFit {
    pub v_sq: f64,
    pub v_asq: f64,
    pub excess: [f64; 2],
    /// Worst relative discrepancy over the significant entries.
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct PurifiedState {
    pub cov: Mat,
    pub labels: Vec<ModeLabel>,
    /// (X-port mode, P-port mode) for Lab 1 and Lab 2.
    pub het_ports: [(usize, usize); 2],
    pub fit: SourceFit,
    pub input: PurificationInput,
}

impl PurifiedState {
    pub fn eve_modes(&self) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, l)| l.party == Party::Eve).map(|(i, _)| i).collect()
    }

    pub fn n_modes(&self) -> usize {
        self.labels.len()
    }

    /// Heterodyne outcome covariance of the two labs, electronic noise removed.
    pub fn reduced_outcome(&self) -> Matrix4<f64> {
        let [(x1, p1), (x2, p2)] = self.het_ports;
        let idx = [2 * x1, 2 * p1 + 1, 2 * x2, 2 * p2 + 1];
        let mut m = Matrix4::from_fn(|i, j| self.cov[(idx[i], idx[j])]);
        for lab in 0..2 {
            let e = self.input.arms[lab].detector.electronic;
            for q in 0..2 {
                m[(2 * lab + q, 2 * lab + q)] -= e;
            }
        }
        m
    }

    pub fn max_symplectic_deviation(&self) -> f64 {
        symplectic_spectrum(&self.cov)
            .map(|nu| nu.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max))
            .unwrap_or(f64::INFINITY)
    }
}

struct Builder {
    cov: Mat,
    labels: Vec<ModeLabel>,
}

impl Builder {
    fn new() -> Self {
        Builder { cov: Mat::zeros(0, 0), labels: vec![] }
    }

    fn add(&mut self, block: Mat, names: &[(&str, Party)]) -> Vec<usize> {
        let start = self.labels.len();
        self.cov = ops::direct_sum(&self.cov, &block);
        for (n, p) in names {
            self.labels.push(ModeLabel { name: n.to_string(), party: *p });
        }
        (start..self.labels.len()).collect()
    }

    fn apply(&mut self, s: Mat) {
        self.cov = ops::apply(&s, &self.cov);
    }

    fn bs(&mut self, a: usize, b: usize, t: f64) {
        let n = self.labels.len();
        self.apply(ops::beamsplitter(n, a, b, t));
    }

    /// Loss of transmissivity t on mode a into a fresh vacuum owned by `party`.
    fn loss(&mut self, a: usize, t: f64, name: &str, party: Party) {
        if t < 1.0 {
            let m = self.add(ops::vacuum(1), &[(name, party)]);
            self.bs(a, m[0], t);
        }
    }
}

/// Transmissivity and pure squeezing of the source split (vacuum ancilla):
/// u·s + 1 − u = Vsq and u/s + 1 − u = Vasq. Returns None unless Vsq < 1 < Vasq.
pub fn source_split(v_sq: f64, v_asq: f64) -> Option<(f64, f64)> {
    if !(v_sq < 1.0 && v_asq > 1.0 && v_sq * v_asq >= 1.0 - 1e-12) {
        return None;
    }
    let u = ((1.0 - v_sq) * (v_asq - 1.0) / (v_sq + v_asq - 2.0)).min(1.0);
    let s = (v_sq - 1.0 + u) / u;
    Some((u, s))
}

fn build_state(fit: &SourceFit, input: &PurificationInput) -> Result<PurifiedState, GaussianError> {
    let mut b = Builder::new();
    let s = b.add(ops::vacuum(1), &[("source", Party::Trusted)])[0];
    match source_split(fit.v_sq, fit.v_asq) {
        Some((u, sq)) => {
            b.cov = ops::squeezed(sq);
            let f = input.source_untrusted_fraction.clamp(0.0, 1.0);
            b.loss(s, u.powf(1.0 - f), "source-trusted-loss", Party::Trusted);
            b.loss(s, u.powf(f), "source-eve-loss", Party::Eve);
        }
        None => {
            // squeezed thermal state purified by a trusted two-mode squeezed ancilla
            let nu = (fit.v_sq * fit.v_asq).sqrt();
            if nu < 1.0 - 1e-12 {
                return Err(GaussianError::ModelMismatch(format!(
                    "source variances {:.4}·{:.4} violate the uncertainty bound",
                    fit.v_sq, fit.v_asq
                )));
            }
            b.cov = Mat::zeros(0, 0);
            b.labels.clear();
            b.add(ops::tmsv(nu.max(1.0)), &[("source", Party::Trusted), ("source-purifier", Party::Trusted)]);
            let k = (fit.v_sq / nu).sqrt();
            let mut m = Mat::identity(4, 4);
            m[(0, 0)] = k;
            m[(1, 1)] = 1.0 / k;
            b.apply(m);
        }
    }
    let lab2 = b.add(ops::vacuum(1), &[("lab2-arm", Party::Trusted)])[0];
    b.bs(s, lab2, 0.5);
    let arms = [s, lab2];
    let mut het = [(0, 0); 2];
    for (k, arm) in input.arms.iter().enumerate() {
        let t = arm.transmissivity();
        let tag = k + 1;
        if t < 1.0 {
            let w = 1.0 + t * fit.excess[k] / (1.0 - t);
            let e = b.add(
                ops::tmsv(w),
                &[(&format!("eve{tag}-inject"), Party::Eve), (&format!("eve{tag}-hold"), Party::Eve)],
            );
            b.bs(arms[k], e[0], t);
        } else if fit.excess[k] > 0.0 {
            return Err(GaussianError::ModelMismatch("excess noise needs a lossy arm".into()));
        }
        let det = arm.detector;
        if det.efficiency < 1.0 {
            // state-level electronic noise 2e is trusted excess on the detector loss port
            let vn = 1.0 + 2.0 * det.electronic / (1.0 - det.efficiency);
            let d = b.add(
                ops::tmsv(vn),
                &[(&format!("det{tag}-noise"), Party::Trusted), (&format!("det{tag}-purifier"), Party::Trusted)],
            );
            b.bs(arms[k], d[0], det.efficiency);
        } else if det.electronic > 0.0 {
            return Err(GaussianError::Invalid("electronic noise needs detector efficiency < 1".into()));
        }
        let h = b.add(ops::vacuum(1), &[(&format!("lab{tag}-het-p"), Party::Trusted)])[0];
        b.bs(arms[k], h, 0.5);
        b.labels[arms[k]].name = format!("lab{tag}-het-x");
        het[k] = (arms[k], h);
    }
    Ok(PurifiedState { cov: b.cov, labels: b.labels, het_ports: het, fit: *fit, input: *input })
}

/// Analytic heterodyne outcome statistics (electronic noise removed) for the model.
fn predicted_outcome(v_sq: f64, v_asq: f64, excess: [f64; 2], input: &PurificationInput) -> Matrix4<f64> {
    let src = [v_sq, v_asq];
    let mut m = Matrix4::zeros();
    let mut gain = [0.0; 2];
    for k in 0..2 {
        let t = input.arms[k].transmissivity();
        let eta = input.arms[k].detector.efficiency;
        gain[k] = t * eta;
        for q in 0..2 {
            let split = 0.5 * (src[q] + 1.0);
            let state = eta * (t * (split + excess[k]) + 1.0 - t) + 1.0 - eta;
            m[(2 * k + q, 2 * k + q)] = 0.5 * (state + 1.0);
        }
    }
    for q in 0..2 {
        let c = 0.25 * (gain[0] * gain[1]).sqrt() * (src[q] - 1.0);
        m[(q, 2 + q)] = c;
        m[(2 + q, q)] = c;
    }
    m
}

/// An entry reproduces the measurement if it is within 1% relative, or if the
/// measurement is statistically zero (≤ 3 SE) and the model is within 3 SE.
fn entry_ok(model: f64, meas: &CovMatrix4, i: usize, j: usize) -> bool {
    let m = meas.entries[(i, j)].abs();
    let se = meas.se[(i, j)];
    let d = (model.abs() - m).abs();
    d <= 0.01 * m || (m <= 3.0 * se && d <= 3.0 * se)
}

pub fn round_trip_ok(model: &Matrix4<f64>, meas: &CovMatrix4) -> bool {
    (0..4).all(|i| (0..4).all(|j| entry_ok(model[(i, j)], meas, i, j)))
}

const FIT_ENTRIES: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (3, 3), (0, 2), (1, 3)];

fn fit_source(meas: &CovMatrix4, input: &PurificationInput) -> Result<SourceFit, GaussianError> {
    let e = &meas.entries;
    let free: Vec<usize> = (0..2).filter(|&k| input.arms[k].fit_excess).collect();
    let unpack = |p: &[f64]| -> (f64, f64, [f64; 2]) {
        let v_sq = p[0].exp();
        let v_asq = (1.0 + p[1].exp()) / v_sq;
        let mut ex = [input.arms[0].excess_noise, input.arms[1].excess_noise];
        for (n, &k) in free.iter().enumerate() {
            ex[k] = p[2 + n] * p[2 + n];
        }
        (v_sq, v_asq, ex)
    };
    let residual = |p: &[f64]| -> Vec<f64> {
        let (a, b, ex) = unpack(p);
        let h = predicted_outcome(a, b, ex, input);
        FIT_ENTRIES.iter().map(|&(i, j)| (h[(i, j)].abs() - e[(i, j)].abs()) / e[(i, j)].abs()).collect()
    };
    let a1 = input.arms[0].transmissivity() * input.arms[0].detector.efficiency;
    let guess_sq = (1.0 + 4.0 * (e[(0, 0)] - 1.0) / a1).clamp(0.02, 0.999);
    let guess_asq = (1.0 + 4.0 * (e[(1, 1)] - 1.0) / a1).max(1.0 / guess_sq + 1e-3);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start_ex in [0.0f64, 0.02, 0.05, 0.1] {
        let mut p0 = vec![guess_sq.ln(), (guess_sq * guess_asq - 1.0).max(1e-6).ln()];
        for &k in &free {
            p0.push(start_ex.max(input.arms[k].excess_noise).sqrt());
        }
        let r = levenberg_marquardt(residual, &p0, LmOptions::default());
        if best.as_ref().map_or(true, |(c, _)| r.residual_norm < *c) {
            best = Some((r.residual_norm, r.x));
        }
    }
    let (_, p) = best.expect("at least one start");
    let (v_sq, v_asq, excess) = unpack(&p);
    let max_rel_error = residual(&p).iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(SourceFit { v_sq, v_asq, excess, max_rel_error })
}

/// Solves the source and excess-noise parameters from a measured covariance
/// and builds the globally pure state.
pub fn build_purification(meas: &CovMatrix4, input: &PurificationInput) -> Result<PurifiedState, GaussianError> {
    for arm in &input.arms {
        let d = arm.detector;
        if !(arm.loss_db >= 0.0 && d.efficiency > 0.0 && d.efficiency <= 1.0 && d.electronic >= 0.0) {
            return Err(GaussianError::Invalid("arm parameters out of range".into()));
        }
    }
    let fit = fit_source(meas, input)?;
    let state = build_state(&fit, input)?;
    let model = state.reduced_outcome();
    if !round_trip_ok(&model, meas) {
        return Err(GaussianError::ModelMismatch(format!(
            "best fit (Vsq {:.4}, Vasq {:.4}, excess {:?}) misses the measured entries by up to {:.2}%",
            fit.v_sq,
            fit.v_asq,
            fit.excess,
            100.0 * fit.max_rel_error
        )));
    }
    Ok(state)
}

/// Builds the state directly from known source parameters (no fit).
pub fn purification_from_source(fit: SourceFit, input: &PurificationInput) -> Result<PurifiedState, GaussianError> {
    build_state(&fit, input)
}

/// Covariance of Lab 1 and Lab 2 arm modes right before heterodyne.
pub fn lab_modes(state: &PurifiedState) -> Mat {
    reduce(&state.cov, &[state.het_ports[0].0, state.het_ports[1].0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal_input() -> PurificationInput {
        let arm = ArmModel {
            loss_db: 0.0,
            excess_noise: 0.0,
            fit_excess: false,
            detector: DetectorModel { efficiency: 1.0, electronic: 0.0 },
        };
        PurificationInput { arms: [arm, arm], source_untrusted_fraction: 0.0 }
    }

    #[test]
    fn source_split_reproduces_variances() {
        let (u, s) = source_split(0.55, 9.0).unwrap();
        assert!((u * s + 1.0 - u - 0.55).abs() < 1e-12);
        assert!((u / s + 1.0 - u - 9.0).abs() < 1e-12);
        assert!(source_split(1.2, 3.0).is_none());
    }

    #[test]
    fn analytic_outcome_matches_state() {
        let arm = |l, e, el| ArmModel {
            loss_db: l,
            excess_noise: e,
            fit_excess: false,
            detector: DetectorModel { efficiency: 0.9, electronic: el },
        };
        let input = PurificationInput { arms: [arm(0.3, 0.0, 0.05), arm(0.47, 0.03, 0.1)], source_untrusted_fraction: 0.3 };
        let fit = SourceFit { v_sq: 0.5, v_asq: 8.0, excess: [0.0, 0.03], max_rel_error: 0.0 };
        let st = build_state(&fit, &input).unwrap();
        let a = st.reduced_outcome();
        let b = predicted_outcome(0.5, 8.0, [0.0, 0.03], &input);
        for i in 0..4 {
            for j in 0..4 {
                assert!((a[(i, j)].abs() - b[(i, j)].abs()).abs() < 1e-12, "{i}{j}: {} vs {}", a[(i, j)], b[(i, j)]);
            }
        }
        assert!(st.max_symplectic_deviation() < 1e-9);
    }

    #[test]
    fn pure_lossless_source_has_no_eve() {
        let fit = SourceFit { v_sq: 0.5, v_asq: 2.0, excess: [0.0; 2], max_rel_error: 0.0 };
        let st = build_state(&fit, &ideal_input()).unwrap();
        assert!(st.eve_modes().is_empty());
    }
}
