//! Run-directory layout and the manifest that hands data between stages.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqzrx::ensemble::QuadratureEnsemble;

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.toml";
pub const RUN_CONFIG: &str = "run.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub lab: String,
    pub frame: usize,
    pub file: String,
    /// Trace metadata: model provenance, seeds and ground truth.
    pub truth: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub lab: String,
    pub vacuum: String,
    pub electronic: String,
}

/// Ground truth and file list written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub scenario: String,
    pub labs: Vec<String>,
    pub frames: usize,
    pub frame_samples: usize,
    pub sample_rate: f64,
    pub channels: usize,
    /// Analytic mode variances of a single receiver, electronic noise removed.
    pub expected_var_x: f64,
    pub expected_var_p: f64,
    pub calibration: Vec<CalibrationEntry>,
    pub traces: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: &Path) -> Self {
        RunDir { root: root.to_path_buf() }
    }

    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self::new(root))
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    fn prepare(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        Ok(p)
    }

    pub fn write(&self, rel: &str, text: &str) -> Result<()> {
        let p = self.prepare(rel)?;
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }

    pub fn read(&self, rel: &str) -> Result<String> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(CliError::missing(&p));
        }
        std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))
    }

    pub fn save_trace(&self, rel: &str, t: &sqzrx::simkit::RawTrace) -> Result<()> {
        let p = self.prepare(rel)?;
        t.save(&p).map_err(CliError::sim)
    }

    pub fn load_trace(&self, rel: &str) -> Result<sqzrx::simkit::RawTrace> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(CliError::missing(&p));
        }
        sqzrx::simkit::RawTrace::load(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    }

    pub fn save_ensemble(&self, rel: &str, e: &QuadratureEnsemble) -> Result<()> {
        let p = self.prepare(rel)?;
        let f = std::fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
        let mut w = std::io::BufWriter::new(f);
        e.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&p, e))
    }

    pub fn csv_writer(&self, rel: &str) -> Result<csv::Writer<std::fs::File>> {
        let p = self.prepare(rel)?;
        csv::Writer::from_path(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    }

    pub fn read_csv(&self, rel: &str) -> Result<Vec<BTreeMap<String, String>>> {
        let p = self.path(rel);
        let mut r = csv::Reader::from_path(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    }

    pub fn manifest(&self) -> Result<Manifest> {
        toml::from_str(&self.read(MANIFEST)?).map_err(|e| CliError::Data(format!("{MANIFEST}: {e}")))
    }
}

pub fn csv_err(e: csv::Error) -> CliError {
    CliError::Data(e.to_string())
}

pub fn to_toml<T: Serialize>(v: &T) -> String {
    toml::to_string(v).expect("serializable")
}

/// Empty cell for a missing optional value.
pub fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Config(e.to_string()))
}
