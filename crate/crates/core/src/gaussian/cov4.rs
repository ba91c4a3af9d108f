use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use super::{symplectic_spectrum, GaussianError, Mat, PHYSICAL_TOL};
use crate::ensemble::{Normalization, QuadratureEnsemble};

/// Two-party heterodyne-outcome covariance in (X₁, P₁, X₂, P₂) order.
///
/// Entries are normalized heterodyne outcome statistics with electronic noise
/// removed: a vacuum input gives the identity. `se` holds ±1 standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix4 {
    pub entries: Matrix4<f64>,
    pub se: Matrix4<f64>,
    pub n_symbols: u64,
}

#[derive(Serialize, Deserialize)]
struct CovFile {
    n_symbols: u64,
    entries: Vec<Vec<f64>>,
    se: Vec<Vec<f64>>,
}

impl CovMatrix4 {
    /// Builds a matrix and fills missing standard errors (NaN) asymptotically.
    pub fn new(entries: Matrix4<f64>, se: Matrix4<f64>, n_symbols: u64) -> Result<Self, GaussianError> {
        let mut se = se;
        for i in 0..4 {
            for j in 0..4 {
                if !se[(i, j)].is_finite() {
                    se[(i, j)] = asymptotic_se(&entries, i, j, n_symbols);
                }
            }
        }
        let c = CovMatrix4 { entries, se, n_symbols };
        c.validate()?;
        Ok(c)
    }

    /// The published covariance, entered verbatim, with its printed ± values.
    pub fn published() -> Self {
        let e = Matrix4::new(
            0.9149, 1.4365e-5, 0.0836, 0.0028, //
            1.4365e-5, 2.6854, 0.0027, 1.5886, //
            0.0836, 0.0027, 0.9346, 1.4379e-5, //
            0.0028, 1.5886, 1.4379e-5, 2.5297,
        );
        let nan = f64::NAN;
        let se = Matrix4::new(
            0.0041, nan, 0.0022, 0.0019, //
            nan, 0.0144, 0.0019, 0.0095, //
            0.0022, 0.0019, 0.0045, nan, //
            0.0019, 0.0095, nan, 0.0137,
        );
        Self::new(e, se, 2_400_000).expect("published covariance is physical")
    }

    pub fn vacuum(n_symbols: u64) -> Self {
        Self::new(Matrix4::identity(), Matrix4::from_element(f64::NAN), n_symbols).unwrap()
    }

    pub fn validate(&self) -> Result<(), GaussianError> {
        let e = &self.entries;
        if (e - e.transpose()).amax() > 1e-12 * e.amax().max(1.0) {
            return Err(GaussianError::Invalid("covariance not symmetric".into()));
        }
        if (0..4).any(|i| e[(i, i)] <= 0.0) {
            return Err(GaussianError::Invalid("non-positive diagonal".into()));
        }
        // sampling noise may push an estimated vacuum slightly below the
        // bound, so allow 3 SE on the state-level diagonal (γ = 2h − I)
        let se = (0..4).map(|i| self.se[(i, i)]).fold(0.0, f64::max);
        let tol = PHYSICAL_TOL + 6.0 * se;
        match self.state_level() {
            Ok(_) => Ok(()),
            Err(GaussianError::NonPhysical(min)) if min >= 1.0 - tol => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Covariance of a two-mode state whose heterodyne statistics are these
    /// entries: γ = 2h − I. A lab whose LO sits on the other side of the
    /// signal records the conjugate field (P → −P), so the Lab 2 P sign is
    /// flipped when that is what makes γ physical.
    pub fn state_level(&self) -> Result<Mat, GaussianError> {
        let mut best = f64::NEG_INFINITY;
        for flip in [1.0, -1.0] {
            let s = [1.0, 1.0, 1.0, flip];
            let g = Mat::from_fn(4, 4, |i, j| {
                2.0 * self.entries[(i, j)] * s[i] * s[j] - if i == j { 1.0 } else { 0.0 }
            });
            let nu = symplectic_spectrum(&g).map_err(|e| GaussianError::Invalid(format!("2·entries − I: {e}")))?;
            let min = nu.last().copied().unwrap_or(1.0);
            if min >= 1.0 - PHYSICAL_TOL {
                return Ok(g);
            }
            best = best.max(min);
        }
        Err(GaussianError::NonPhysical(best))
    }

    pub fn to_dmatrix(&self) -> Mat {
        Mat::from_fn(4, 4, |i, j| self.entries[(i, j)])
    }

    /// Outcome statistics with trusted electronic noise put back (SNU, per lab).
    pub fn with_outcome_noise(&self, noise: [f64; 2]) -> Matrix4<f64> {
        let mut m = self.entries;
        for lab in 0..2 {
            for q in 0..2 {
                m[(2 * lab + q, 2 * lab + q)] += noise[lab];
            }
        }
        m
    }

    pub fn to_text(&self) -> String {
        let rows = |m: &Matrix4<f64>| (0..4).map(|i| (0..4).map(|j| m[(i, j)]).collect()).collect();
        let f = CovFile { n_symbols: self.n_symbols, entries: rows(&self.entries), se: rows(&self.se) };
        toml::to_string(&f).expect("serializable")
    }

    pub fn from_text(s: &str) -> Result<Self, GaussianError> {
        let f: CovFile = toml::from_str(s).map_err(|e| GaussianError::Invalid(e.to_string()))?;
        let grab = |v: &Vec<Vec<f64>>, name: &str| -> Result<Matrix4<f64>, GaussianError> {
            if v.len() != 4 || v.iter().any(|r| r.len() != 4) {
                return Err(GaussianError::Invalid(format!("{name} must be 4x4")));
            }
            Ok(Matrix4::from_fn(|i, j| v[i][j]))
        };
        Self::new(grab(&f.entries, "entries")?, grab(&f.se, "se")?, f.n_symbols)
    }
}

fn asymptotic_se(e: &Matrix4<f64>, i: usize, j: usize, n: u64) -> f64 {
    let n = n.max(1) as f64;
    if i == j {
        e[(i, i)] * (2.0 / n).sqrt()
    } else {
        ((e[(i, i)] * e[(j, j)] + e[(i, j)] * e[(i, j)]) / n).sqrt()
    }
}

/// Sample covariance of two symbol-aligned SNU ensembles.
///
/// `electronic` is each lab's electronic-noise variance as a fraction of its
/// vacuum calibration (which includes electronic noise). It is subtracted from
/// the diagonals and the shot-noise unit is rescaled so vacuum still maps to 1.
pub fn estimate_covariance(
    ens1: &QuadratureEnsemble,
    ens2: &QuadratureEnsemble,
    electronic: [f64; 2],
) -> Result<CovMatrix4, GaussianError> {
    let n = ens1.len();
    if n != ens2.len() {
        return Err(GaussianError::Misaligned(n, ens2.len()));
    }
    if n < 2 {
        return Err(GaussianError::Invalid("too few symbols".into()));
    }
    for e in [ens1, ens2] {
        if e.normalization != Normalization::ShotNoiseUnits {
            return Err(GaussianError::Invalid("ensembles must be in shot-noise units".into()));
        }
    }
    let cols: [&[f64]; 4] = [&ens1.x, &ens1.p, &ens2.x, &ens2.p];
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut raw = Matrix4::zeros();
    for i in 0..4 {
        for j in i..4 {
            let s: f64 = cols[i]
                .iter()
                .zip(cols[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .sum();
            raw[(i, j)] = s / (n - 1) as f64;
            raw[(j, i)] = raw[(i, j)];
        }
    }
    let scale = [1.0 - electronic[0], 1.0 - electronic[0], 1.0 - electronic[1], 1.0 - electronic[1]];
    if scale.iter().any(|s| *s <= 0.0) {
        return Err(GaussianError::Invalid("electronic noise fraction must be < 1".into()));
    }
    let mut entries = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let sub = if i == j { electronic[i / 2] } else { 0.0 };
            entries[(i, j)] = (raw[(i, j)] - sub) / (scale[i] * scale[j]).sqrt();
        }
    }
    CovMatrix4::new(entries, Matrix4::from_element(f64::NAN), n as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_matrix_round_trips_through_text() {
        let c = CovMatrix4::published();
        let back = CovMatrix4::from_text(&c.to_text()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn asymptotic_se_example() {
        let c = CovMatrix4::published();
        let se = asymptotic_se(&c.entries, 1, 1, c.n_symbols);
        assert!((se - 2.6854 * (2.0f64 / 2.4e6).sqrt()).abs() < 1e-12);
        assert!((se - 0.00245).abs() < 1e-4);
    }

    #[test]
    fn rejects_sub_vacuum_heterodyne_statistics() {
        let mut e = Matrix4::identity();
        e[(0, 0)] = 0.4;
        e[(1, 1)] = 0.4;
        assert!(CovMatrix4::new(e, Matrix4::from_element(f64::NAN), 1_000_000).is_err());
    }
}
