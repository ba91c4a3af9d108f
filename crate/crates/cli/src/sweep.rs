use rayon::prelude::*;
use sqzrx::ensemble::db;
use sqzrx::scenario::Scenario;

use crate::config::{RunConfig, SweepBase};
use crate::error::{CliError, Result};
use crate::files::{csv_err, pool, RunDir};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub detuning_mhz: f64,
    pub states: usize,
    pub squeezing_db: f64,
    pub se_db: f64,
    pub antisqueezing_db: f64,
    pub expected_squeezing_db: f64,
    pub expected_antisqueezing_db: f64,
}

fn scenario_at(cfg: &RunConfig, mhz: f64) -> Scenario {
    let base = match cfg.sweep.base {
        SweepBase::RfHet => Scenario::rf_het(mhz * 1e6),
        SweepBase::Scenario => cfg.scenario.clone(),
    };
    let mut s = Scenario { lab1: None, frames: cfg.sweep.frames, frame_samples: cfg.sweep.frame_samples, ..base };
    s.receiver.lo_detuning = mhz * 1e6;
    s.calibration_frames = s.calibration_frames.max(1);
    s
}

fn point(cfg: &RunConfig, mhz: f64) -> Result<SweepPoint> {
    let s = scenario_at(cfg, mhz);
    s.validate().map_err(|e| CliError::Config(format!("sweep at {mhz} MHz: {e}")))?;
    let context = format!("sweep at {mhz} MHz");
    let cal = s.calibrate(cfg.seed).map_err(|e| CliError::scenario(&context, e))?;
    let (mut vx, mut vp, mut states, mut e) = (0.0, 0.0, 0, 0.0);
    for i in 0..s.frames {
        eprintln!("sweep: {mhz} MHz frame {i}");
        let r = s.run_frame(cfg.seed, i, &cal, false).map_err(|e| CliError::scenario(&context, e))?;
        let (x, p, _) = r.ensemble.moments();
        let n = r.ensemble.len();
        vx += x * n as f64;
        vp += p * n as f64;
        e += r.electronic_fraction * n as f64;
        states += n;
    }
    let n = states as f64;
    let (vx, vp, e) = (vx / n, vp / n, e / n);
    let corrected = |v: f64| (v - e) / (1.0 - e);
    let k = 10.0 / std::f64::consts::LN_10;
    let (ex, ep) = s.expected_mode_variances();
    Ok(SweepPoint {
        detuning_mhz: mhz,
        states,
        squeezing_db: db(corrected(vx)),
        se_db: k * vx / (vx - e) * (2.0 / n).sqrt(),
        antisqueezing_db: db(corrected(vp)),
        expected_squeezing_db: db(ex),
        expected_antisqueezing_db: db(ep),
    })
}

/// Recovered squeezing against LO detuning, one row per detuning.
pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<SweepPoint>> {
    let points = pool(cfg.jobs)?
        .install(|| cfg.sweep.detunings_mhz.par_iter().map(|&d| point(cfg, d)).collect::<Result<Vec<_>>>())?;
    let mut w = dir.csv_writer("sweep.csv")?;
    w.write_record([
        "detuning_mhz", "states", "squeezing_db", "se_db", "antisqueezing_db", "expected_squeezing_db", "expected_antisqueezing_db",
    ])
    .map_err(csv_err)?;
    for p in &points {
        w.write_record([
            p.detuning_mhz.to_string(),
            p.states.to_string(),
            p.squeezing_db.to_string(),
            p.se_db.to_string(),
            p.antisqueezing_db.to_string(),
            p.expected_squeezing_db.to_string(),
            p.expected_antisqueezing_db.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(points)
}
