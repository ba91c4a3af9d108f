use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files::{pool, to_toml, CalibrationEntry, Manifest, RunDir, TraceEntry, MANIFEST, RUN_CONFIG};

pub fn trace_file(lab: &str, frame: usize) -> String {
    format!("traces/{lab}_frame{frame:03}.sqzt")
}

pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<Manifest> {
    let s = &cfg.scenario;
    dir.write(RUN_CONFIG, &cfg.to_toml())?;

    let mut calibration = Vec::new();
    for (k, lab) in s.labs().iter().enumerate() {
        eprintln!("simulate: calibration traces for {lab}");
        let (vac, el) = s.calibration_traces_for(cfg.seed, k).map_err(CliError::sim)?;
        let entry = CalibrationEntry {
            lab: lab.to_string(),
            vacuum: format!("calibration/{lab}_vacuum.sqzt"),
            electronic: format!("calibration/{lab}_electronic.sqzt"),
        };
        dir.save_trace(&entry.vacuum, &vac)?;
        dir.save_trace(&entry.electronic, &el)?;
        calibration.push(entry);
    }

    let frames: Vec<Vec<TraceEntry>> = pool(cfg.jobs)?.install(|| {
        (0..s.frames)
            .into_par_iter()
            .map(|i| {
                eprintln!("simulate: frame {i}");
                let dets = s.frame_labs(cfg.seed, i).map_err(CliError::sim)?;
                dets.into_iter()
                    .zip(s.labs())
                    .map(|(det, lab)| {
                        let file = trace_file(lab, i);
                        dir.save_trace(&file, &det.trace)?;
                        Ok(TraceEntry { lab: lab.to_string(), frame: i, file, truth: det.trace.metadata })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let (vx, vp) = s.expected_mode_variances();
    let manifest = Manifest {
        seed: cfg.seed,
        scenario: s.name.clone(),
        labs: s.labs().iter().map(|l| l.to_string()).collect(),
        frames: s.frames,
        frame_samples: s.frame_samples,
        sample_rate: s.receiver.adc_rate,
        channels: s.receiver.channels(),
        expected_var_x: vx,
        expected_var_p: vp,
        calibration,
        traces: frames.into_iter().flatten().collect(),
    };
    dir.write(MANIFEST, &to_toml(&manifest))?;
    Ok(manifest)
}
