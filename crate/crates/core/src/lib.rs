//! Squeezed-light digital coherent receiver toolkit.
//!
//! - [`simkit`] synthesizes heterodyne ADC traces with recorded ground truth.
//! - [`dsp`] reconstructs shot-noise-normalized quadratures from traces.
//! - [`gaussian`] and [`qkd`] turn the reconstructed statistics into key rates.

pub mod dsp;
pub mod ensemble;
pub mod gaussian;
pub mod optim;
pub mod qkd;
pub mod scenario;
pub mod seed;
pub mod simkit;
pub mod spectral;
