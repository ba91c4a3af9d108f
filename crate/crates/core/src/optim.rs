//! Small dense optimizers: Levenberg–Marquardt and golden-section search.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Euclidean norm of the final residual vector.
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    pub xtol: f64,
    pub ftol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iter: 500, xtol: 1e-13, ftol: 1e-16 }
    }
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], r0: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = 1e-7 * x[k].abs().max(1e-3);
        xp[k] = x[k] + h;
        let rp = f(&xp);
        xp[k] = x[k] - h;
        let rm = f(&xp);
        xp[k] = x[k];
        for i in 0..r0.len() {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    j
}

fn norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Minimizes ‖f(x)‖² with central-difference Jacobians.
///
/// Non-finite residuals are treated as infinitely bad, so callers can signal
/// out-of-domain parameters by returning NaN.
pub fn levenberg_marquardt<F: Fn(&[f64]) -> Vec<f64>>(f: F, x0: &[f64], opts: LmOptions) -> LmResult {
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let mut cost = norm(&r);
    let mut lambda = 1e-3;
    let mut it = 0;
    while it < opts.max_iter && cost.is_finite() {
        it += 1;
        let j = jacobian(&f, &x, &r);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..x.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rn = f(&xn);
            let cn = norm(&rn);
            if cn.is_finite() && cn < cost {
                let small_step = step.norm() <= opts.xtol * (1.0 + DVector::from_column_slice(&x).norm());
                let small_gain = cost - cn <= opts.ftol * cost.max(1e-300);
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                if small_step || small_gain {
                    return LmResult { x, residual_norm: cost, iterations: it };
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    LmResult { x, residual_norm: cost, iterations: it }
}

/// Minimizes a unimodal function on [a, b); returns the abscissa.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lm_fits_exponential() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let res = levenberg_marquardt(
            |p| t.iter().zip(&y).map(|(t, y)| p[0] * (-p[1] * t).exp() - y).collect(),
            &[1.0, 0.5],
            LmOptions::default(),
        );
        assert!((res.x[0] - 2.5).abs() < 1e-8 && (res.x[1] - 1.3).abs() < 1e-8);
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let x = golden_section(|x| (x - 0.3).powi(2), -1.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
