//! FFT conveniences and band-limited periodic resampling.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

pub fn fft(buf: &mut [C64]) {
    FftPlanner::new().plan_fft_forward(buf.len()).process(buf);
}

/// Inverse FFT including the 1/N factor.
pub fn ifft(buf: &mut [C64]) {
    FftPlanner::new().plan_fft_inverse(buf.len()).process(buf);
    let k = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= k);
}

pub fn fft_real(x: &[f64]) -> Vec<C64> {
    let mut b: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft(&mut b);
    b
}

/// Signed frequency of DFT bin `k` (Nyquist bin reported as negative).
pub fn bin_freq(k: usize, n: usize, rate: f64) -> f64 {
    let k = k as i64;
    let n_i = n as i64;
    let s = if k >= n_i - n_i / 2 { k - n_i } else { k };
    s as f64 * rate / n as f64
}

/// Nearest DFT bin of a (possibly negative) frequency.
pub fn freq_bin(f: f64, n: usize, rate: f64) -> usize {
    let k = (f / rate * n as f64).round() as i64;
    k.rem_euclid(n as i64) as usize
}

/// e^{i2π·c·n} for n = 0, 1, …, by complex recurrence re-anchored to the
/// exact value every 1024 steps.
#[derive(Debug, Clone)]
pub struct Phasor {
    cycles: f64,
    n: usize,
    cur: C64,
    step: C64,
}

impl Phasor {
    pub fn new(cycles_per_sample: f64) -> Self {
        let step = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * cycles_per_sample.fract());
        Phasor { cycles: cycles_per_sample, n: 0, cur: C64::new(1.0, 0.0), step }
    }
}

impl Iterator for Phasor {
    type Item = C64;

    fn next(&mut self) -> Option<C64> {
        if self.n % 1024 == 0 {
            let turns = (self.cycles.fract() * self.n as f64).fract();
            self.cur = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * turns);
        }
        let v = self.cur;
        self.cur *= self.step;
        self.n += 1;
        Some(v)
    }
}

/// exp(iπ·r·m²/n), with m² reduced exactly before the floating-point part.
fn chirp(m: i64, n: usize, r: f64) -> C64 {
    let m2 = (m as i128) * (m as i128);
    let two_n = 2 * n as i128;
    let exact = (m2.rem_euclid(two_n)) as f64 / n as f64;
    let extra = ((r - 1.0) * (m2 as f64) / n as f64).rem_euclid(2.0);
    C64::from_polar(1.0, std::f64::consts::PI * (exact + extra))
}

/// Band-limited periodic interpolation: y[j] = x(j·ratio) for j in 0..N,
/// treating x as one period of a signal whose spectrum occupies the signed
/// bins −N/2 … N/2−1. Evaluated exactly with a chirp-z (Bluestein) transform.
pub fn resample(x: &[C64], ratio: f64) -> Vec<C64> {
    let n = x.len();
    if n == 0 || ratio == 1.0 {
        return x.to_vec();
    }
    let mut spec = x.to_vec();
    fft(&mut spec);
    let k0 = (n / 2) as i64;
    let l = (2 * n - 1).next_power_of_two();
    let mut a = vec![C64::new(0.0, 0.0); l];
    for (j, slot) in a.iter_mut().enumerate().take(n) {
        let k = j as i64 - k0;
        *slot = spec[k.rem_euclid(n as i64) as usize] * chirp(k, n, ratio);
    }
    drop(spec);
    let mut h = vec![C64::new(0.0, 0.0); l];
    for d in -(n as i64 - 1)..(n as i64) {
        h[d.rem_euclid(l as i64) as usize] = chirp(d + k0, n, ratio).conj();
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(l);
    fwd.process(&mut a);
    fwd.process(&mut h);
    a.iter_mut().zip(&h).for_each(|(u, v)| *u *= v);
    drop(h);
    planner.plan_fft_inverse(l).process(&mut a);
    let scale = 1.0 / (l as f64 * n as f64);
    (0..n).map(|j| a[j] * chirp(j as i64, n, ratio) * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_frequency_convention() {
        assert_eq!(bin_freq(0, 8, 8.0), 0.0);
        assert_eq!(bin_freq(3, 8, 8.0), 3.0);
        assert_eq!(bin_freq(4, 8, 8.0), -4.0);
        assert_eq!(bin_freq(7, 8, 8.0), -1.0);
        assert_eq!(freq_bin(-1.0, 8, 8.0), 7);
    }

    #[test]
    fn resample_evaluates_tone_off_grid() {
        let n = 1000;
        let f = 37.0 / n as f64;
        let x: Vec<C64> = (0..n).map(|t| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * t as f64)).collect();
        let r = 1.0 + 3e-4;
        let y = resample(&x, r);
        for (j, v) in y.iter().enumerate() {
            let want = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * j as f64 * r);
            assert!((v - want).norm() < 1e-9, "j={j}");
        }
    }

    #[test]
    fn phasor_matches_direct_evaluation() {
        let c = 0.2371234567;
        for (n, v) in Phasor::new(c).take(5000).enumerate() {
            assert!((v - C64::from_polar(1.0, 2.0 * std::f64::consts::PI * c * n as f64)).norm() < 1e-11, "{n}");
        }
    }

    #[test]
    fn unit_ratio_is_identity() {
        let x: Vec<C64> = (0..64).map(|i| C64::new(i as f64, -(i as f64))).collect();
        assert_eq!(resample(&x, 1.0), x);
    }
}
