//! Quadrature ensembles and their binary file format.
//!
//! File layout (little-endian): magic `SQZQ`, version u16, count u64,
//! normalization flag u8 (0 raw, 1 shot-noise units), then `count` (x, p) f64 pairs.

use std::io::{self, Read, Write};

pub const ENSEMBLE_MAGIC: &[u8; 4] = b"SQZQ";
pub const ENSEMBLE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    ShotNoiseUnits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureEnsemble {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub normalization: Normalization,
    pub samples_per_state: usize,
    /// Hz
    pub bandwidth: f64,
}

impl QuadratureEnsemble {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Sample (var x, var p, cov xp).
    pub fn moments(&self) -> (f64, f64, f64) {
        moments(&self.x, &self.p)
    }

    pub fn scaled(&self, k: f64, normalization: Normalization) -> Self {
        QuadratureEnsemble {
            x: self.x.iter().map(|v| v * k).collect(),
            p: self.p.iter().map(|v| v * k).collect(),
            normalization,
            ..self.clone()
        }
    }

    pub fn concat(parts: &[QuadratureEnsemble]) -> Option<Self> {
        let first = parts.first()?;
        let mut out = QuadratureEnsemble { x: vec![], p: vec![], ..first.clone() };
        for e in parts {
            out.x.extend_from_slice(&e.x);
            out.p.extend_from_slice(&e.p);
        }
        Some(out)
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(ENSEMBLE_MAGIC)?;
        w.write_all(&ENSEMBLE_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        let flag: u8 = match self.normalization {
            Normalization::Raw => 0,
            Normalization::ShotNoiseUnits => 1,
        };
        w.write_all(&[flag])?;
        let mut buf = Vec::with_capacity(16 * self.len());
        for (x, p) in self.x.iter().zip(&self.p) {
            buf.extend_from_slice(&x.to_le_bytes());
            buf.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&buf)
    }

    /// Reads an ensemble; samples_per_state and bandwidth are not stored in the
    /// file and must be supplied by the caller.
    pub fn read_from(r: &mut impl Read, samples_per_state: usize, bandwidth: f64) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut head = [0u8; 15];
        r.read_exact(&mut head)?;
        if &head[0..4] != ENSEMBLE_MAGIC {
            return Err(bad("not an SQZQ ensemble file"));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != ENSEMBLE_VERSION {
            return Err(bad(&format!("unsupported ensemble version {version}")));
        }
        let count = u64::from_le_bytes(head[6..14].try_into().unwrap()) as usize;
        let normalization = match head[14] {
            0 => Normalization::Raw,
            1 => Normalization::ShotNoiseUnits,
            f => return Err(bad(&format!("unknown normalization flag {f}"))),
        };
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != 16 * count {
            return Err(bad("ensemble payload length does not match count"));
        }
        let (mut x, mut p) = (Vec::with_capacity(count), Vec::with_capacity(count));
        for c in body.chunks_exact(16) {
            x.push(f64::from_le_bytes(c[0..8].try_into().unwrap()));
            p.push(f64::from_le_bytes(c[8..16].try_into().unwrap()));
        }
        Ok(QuadratureEnsemble { x, p, normalization, samples_per_state, bandwidth })
    }
}

pub fn moments(x: &[f64], p: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let mp = p.iter().sum::<f64>() / n;
    let (mut vx, mut vp, mut c) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(p) {
        let (da, db) = (a - mx, b - mp);
        vx += da * da;
        vp += db * db;
        c += da * db;
    }
    let d = n - 1.0;
    (vx / d, vp / d, c / d)
}

pub fn db(v: f64) -> f64 {
    10.0 * v.log10()
}
