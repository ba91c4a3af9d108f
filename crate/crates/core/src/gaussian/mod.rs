//! Gaussian-state linear algebra in shot-noise units (vacuum variance 1).
//!
//! Quadratures are ordered (x₁, p₁, x₂, p₂, …) and the symplectic form is
//! Ω = ⊕ [[0, 1], [−1, 0]].

mod cov4;
mod purify;

pub use cov4::{estimate_covariance, CovMatrix4};
pub use purify::{
    build_purification, lab_modes, purification_from_source, round_trip_ok, source_split, ArmModel, DetectorModel, ModeLabel, Party, PurificationInput,
    PurifiedState, SourceFit,
};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type Mat = DMatrix<f64>;

/// Tolerance below 1 accepted for symplectic eigenvalues.
pub const PHYSICAL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("covariance is not physical: smallest symplectic eigenvalue {0:.9}")]
    NonPhysical(f64),
    #[error("matrix is not a valid covariance: {0}")]
    Invalid(String),
    #[error("ensembles misaligned: {0} vs {1} symbols")]
    Misaligned(usize, usize),
    #[error("no physical parameters reproduce the measured covariance: {0}")]
    ModelMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    pub fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }
}

pub fn omega(n_modes: usize) -> Mat {
    let mut w = Mat::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

fn check_square_even(cov: &Mat) -> Result<usize, GaussianError> {
    let (r, c) = cov.shape();
    if r != c || r == 0 || r % 2 != 0 {
        return Err(GaussianError::Invalid(format!("shape {r}x{c}")));
    }
    let scale = cov.amax().max(1.0);
    if (cov - cov.transpose()).amax() > 1e-9 * scale {
        return Err(GaussianError::Invalid("not symmetric".into()));
    }
    Ok(r / 2)
}

/// Symplectic eigenvalues, sorted descending, without the physicality check.
///
/// With γ = LLᵀ, the matrix LᵀΩL is antisymmetric with eigenvalues ±iν, so
/// the Hermitian matrix i·LᵀΩL has eigenvalues ±ν.
pub fn symplectic_spectrum(cov: &Mat) -> Result<Vec<f64>, GaussianError> {
    let n = check_square_even(cov)?;
    let sym = (cov + cov.transpose()) * 0.5;
    let l = match sym.clone().cholesky() {
        Some(c) => c.l(),
        None => {
            return Err(GaussianError::Invalid(format!(
                "not positive definite (min eigenvalue {:.3e})",
                SymmetricEigen::new(sym).eigenvalues.min()
            )))
        }
    };
    let a = l.transpose() * omega(n) * &l;
    let h = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        // i·(A − Aᵀ)/2, exactly Hermitian
        Complex64::new(0.0, 0.5 * (a[(i, j)] - a[(j, i)]))
    });
    let mut nu: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().filter(|v| *v > 0.0).collect();
    nu.sort_by(|a, b| b.total_cmp(a));
    if nu.len() != n {
        return Err(GaussianError::Invalid("degenerate symplectic spectrum".into()));
    }
    Ok(nu)
}

pub fn symplectic_eigenvalues(cov: &Mat) -> Result<Vec<f64>, GaussianError> {
    let nu = symplectic_spectrum(cov)?;
    let min = nu.last().copied().unwrap_or(1.0);
    if min < 1.0 - PHYSICAL_TOL {
        return Err(GaussianError::NonPhysical(min));
    }
    Ok(nu)
}

/// Entropy contribution of one symplectic eigenvalue, in bits.
pub fn g(nu: f64) -> f64 {
    let a = (nu + 1.0) / 2.0;
    let b = (nu - 1.0) / 2.0;
    if b <= 1e-15 {
        // b·log b → 0 as b → 0
        return if b <= 0.0 { 0.0 } else { a * a.log2() - b * b.log2() };
    }
    a * a.log2() - b * b.log2()
}

pub fn von_neumann_entropy(cov: &Mat) -> Result<f64, GaussianError> {
    Ok(symplectic_eigenvalues(cov)?.into_iter().map(g).sum())
}

/// Quadrature indices of the given modes, in order.
fn quad_indices(modes: &[usize]) -> Vec<usize> {
    modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect()
}

pub fn submatrix(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Partial trace: the covariance of the listed modes.
pub fn reduce(cov: &Mat, modes: &[usize]) -> Mat {
    let q = quad_indices(modes);
    submatrix(cov, &q, &q)
}

/// Conditional covariance of all other modes after homodyning `quadrature` of
/// `measured_mode`: γ_A − σ (XγX)^{MP} σᵀ. Remaining modes keep their order.
pub fn condition_on_homodyne(cov: &Mat, measured_mode: usize, quadrature: Quadrature) -> Mat {
    let n = cov.nrows() / 2;
    assert!(measured_mode < n, "mode {measured_mode} out of range");
    let rest: Vec<usize> = (0..n).filter(|&m| m != measured_mode).collect();
    let a = quad_indices(&rest);
    let b = quad_indices(&[measured_mode]);
    let gamma_a = submatrix(cov, &a, &a);
    let sigma = submatrix(cov, &a, &b);
    let mut xgx = submatrix(cov, &b, &b);
    let keep = quadrature.offset();
    for i in 0..2 {
        for j in 0..2 {
            if i != keep || j != keep {
                xgx[(i, j)] = 0.0;
            }
        }
    }
    let pinv = xgx
        .pseudo_inverse(1e-14)
        .expect("pseudo-inverse of a 2x2 block cannot fail for eps > 0");
    let out = gamma_a - &sigma * pinv * sigma.transpose();
    (&out + out.transpose()) * 0.5
}

/// Index bookkeeping after removing `removed` from a list of mode indices.
pub fn relabel_after_removal(modes: &[usize], removed: usize) -> Vec<usize> {
    modes
        .iter()
        .filter(|&&m| m != removed)
        .map(|&m| if m > removed { m - 1 } else { m })
        .collect()
}

/// Symplectic building blocks acting on a full 2n×2n covariance.
pub mod ops {
    use super::Mat;

    pub fn direct_sum(a: &Mat, b: &Mat) -> Mat {
        let (n, m) = (a.nrows(), b.nrows());
        let mut out = Mat::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(a);
        out.view_mut((n, n), (m, m)).copy_from(b);
        out
    }

    pub fn vacuum(n_modes: usize) -> Mat {
        Mat::identity(2 * n_modes, 2 * n_modes)
    }

    pub fn thermal(v: f64) -> Mat {
        Mat::identity(2, 2) * v
    }

    pub fn squeezed(vx: f64) -> Mat {
        Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![vx, 1.0 / vx]))
    }

    /// Two-mode squeezed vacuum with local variance v (v ≥ 1), correlations ±√(v²−1).
    pub fn tmsv(v: f64) -> Mat {
        let c = (v * v - 1.0).max(0.0).sqrt();
        Mat::from_row_slice(
            4,
            4,
            &[
                v, 0.0, c, 0.0, //
                0.0, v, 0.0, -c, //
                c, 0.0, v, 0.0, //
                0.0, -c, 0.0, v,
            ],
        )
    }

    /// Beamsplitter of transmissivity t between modes a and b.
    pub fn beamsplitter(n_modes: usize, a: usize, b: usize, t: f64) -> Mat {
        let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
        let mut m = Mat::identity(2 * n_modes, 2 * n_modes);
        for q in 0..2 {
            let (i, j) = (2 * a + q, 2 * b + q);
            m[(i, i)] = st;
            m[(i, j)] = sr;
            m[(j, i)] = -sr;
            m[(j, j)] = st;
        }
        m
    }

    pub fn rotation(n_modes: usize, a: usize, angle: f64) -> Mat {
        let (s, c) = angle.sin_cos();
        let mut m = Mat::identity(2 * n_modes, 2 * n_modes);
        m[(2 * a, 2 * a)] = c;
        m[(2 * a, 2 * a + 1)] = s;
        m[(2 * a + 1, 2 * a)] = -s;
        m[(2 * a + 1, 2 * a + 1)] = c;
        m
    }

    pub fn single_mode_squeezer(n_modes: usize, a: usize, r: f64) -> Mat {
        let mut m = Mat::identity(2 * n_modes, 2 * n_modes);
        m[(2 * a, 2 * a)] = (-r).exp();
        m[(2 * a + 1, 2 * a + 1)] = r.exp();
        m
    }

    pub fn apply(s: &Mat, cov: &Mat) -> Mat {
        let out = s * cov * s.transpose();
        (&out + out.transpose()) * 0.5
    }
}
