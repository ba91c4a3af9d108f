use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::SimError;

const MAGIC: &[u8; 4] = b"SQZT";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 64;

/// Sampled ADC output. Samples are kept as i32 so in-memory traces can use up
/// to 24 bits; the file format stores 16-bit samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub channels: Vec<Vec<i32>>,
    pub sample_rate: f64,
    pub bit_depth: u16,
    pub metadata: BTreeMap<String, String>,
}

impl RawTrace {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.channels.is_empty() || self.channels.len() > 2 {
            return Err(SimError::Format(format!("{} channels", self.channels.len())));
        }
        if !(8..=24).contains(&self.bit_depth) {
            return Err(SimError::Format(format!("bit depth {}", self.bit_depth)));
        }
        let n = self.len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(SimError::Format("channel lengths differ".into()));
        }
        let (lo, hi) = (-(1i32 << (self.bit_depth - 1)), (1i32 << (self.bit_depth - 1)) - 1);
        if self.channels.iter().flatten().any(|&s| s < lo || s > hi) {
            return Err(SimError::Format("sample outside bit range".into()));
        }
        Ok(())
    }

    /// LSB size of channel `c` in shot-noise amplitude units (1 if unrecorded).
    pub fn lsb(&self, c: usize) -> f64 {
        self.meta_f64(&format!("lsb.{c}")).unwrap_or(1.0)
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(|v| v.parse().ok())
    }

    /// Channel `c` converted back to analog units.
    pub fn analog(&self, c: usize) -> Vec<f64> {
        let lsb = self.lsb(c);
        self.channels[c].iter().map(|&s| s as f64 * lsb).collect()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), SimError> {
        self.validate()?;
        if self.bit_depth > 16 {
            return Err(SimError::Format(format!("file format holds 16-bit samples, trace has {}", self.bit_depth)));
        }
        let meta: String = self.metadata.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(MAGIC);
        h[4..6].copy_from_slice(&VERSION.to_le_bytes());
        h[6..8].copy_from_slice(&(self.channels.len() as u16).to_le_bytes());
        h[8..10].copy_from_slice(&self.bit_depth.to_le_bytes());
        h[12..20].copy_from_slice(&self.sample_rate.to_le_bytes());
        h[20..28].copy_from_slice(&(self.len() as u64).to_le_bytes());
        h[28..32].copy_from_slice(&(meta.len() as u32).to_le_bytes());
        w.write_all(&h)?;
        w.write_all(meta.as_bytes())?;
        let mut buf = Vec::with_capacity(self.len() * self.channels.len() * 2);
        for i in 0..self.len() {
            for c in &self.channels {
                buf.extend_from_slice(&(c[i] as i16).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, SimError> {
        let mut h = [0u8; HEADER_LEN];
        r.read_exact(&mut h)?;
        if &h[0..4] != MAGIC {
            return Err(SimError::Format("bad magic".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([h[o], h[o + 1]]);
        let version = u16_at(4);
        if version != VERSION {
            return Err(SimError::Format(format!("unsupported version {version}")));
        }
        let n_ch = u16_at(6) as usize;
        let bit_depth = u16_at(8);
        let sample_rate = f64::from_le_bytes(h[12..20].try_into().unwrap());
        let count = u64::from_le_bytes(h[20..28].try_into().unwrap()) as usize;
        let meta_len = u32::from_le_bytes(h[28..32].try_into().unwrap()) as usize;
        if !(1..=2).contains(&n_ch) {
            return Err(SimError::Format(format!("{n_ch} channels")));
        }
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta = String::from_utf8(meta).map_err(|_| SimError::Format("metadata is not UTF-8".into()))?;
        let mut metadata = BTreeMap::new();
        for line in meta.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| SimError::Format(format!("metadata line {line:?}")))?;
            metadata.insert(k.to_string(), v.to_string());
        }
        let mut raw = vec![0u8; count * n_ch * 2];
        r.read_exact(&mut raw)?;
        let mut channels = vec![Vec::with_capacity(count); n_ch];
        for (i, pair) in raw.chunks_exact(2).enumerate() {
            channels[i % n_ch].push(i16::from_le_bytes([pair[0], pair[1]]) as i32);
        }
        let t = RawTrace { channels, sample_rate, bit_depth, metadata };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), SimError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SimError> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
