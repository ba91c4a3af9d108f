use rayon::prelude::*;
use sqzrx::dsp::{self, welch_psd, Calibration, FrameResult, ReconstructionRecord};
use sqzrx::ensemble::{db, QuadratureEnsemble};
use sqzrx::gaussian::estimate_covariance;
use sqzrx::scenario::Scenario;
use sqzrx::simkit::theory::received_spectrum;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files::{csv_err, opt, pool, to_toml, Manifest, RunDir};

pub const COVARIANCE: &str = "covariance.toml";
const POLARIZATION_NFFT: usize = 4096;

pub fn calibration_file(lab: &str) -> String {
    format!("calibration/{lab}.toml")
}

pub fn record_file(lab: &str) -> String {
    format!("record_{lab}.toml")
}

fn compute_calibration(cfg: &RunConfig, dir: &RunDir, manifest: &Manifest, lab: &str) -> Result<Calibration> {
    let entry = manifest
        .calibration
        .iter()
        .find(|c| c.lab == lab)
        .ok_or_else(|| CliError::Data(format!("manifest lists no calibration traces for {lab}")))?;
    let vac = dir.load_trace(&entry.vacuum)?;
    let el = dir.load_trace(&entry.electronic)?;
    dsp::calibrate(&vac, &el, &cfg.scenario.dsp_config(), manifest.frame_samples)
        .map_err(|e| CliError::dsp(&format!("calibration of {lab}"), e))
}

/// Measures each receiver's vacuum and electronic levels from the calibration
/// traces and stores them for `reconstruct`.
pub fn calibrate(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let manifest = dir.manifest()?;
    for lab in &manifest.labs {
        eprintln!("calibrate: {lab}");
        let cal = compute_calibration(cfg, dir, &manifest, lab)?;
        dir.write(&calibration_file(lab), &to_toml(&cal))?;
    }
    Ok(())
}

/// Stored calibration if present, else measured from the calibration traces.
fn calibration(cfg: &RunConfig, dir: &RunDir, manifest: &Manifest, lab: &str) -> Result<Calibration> {
    let file = calibration_file(lab);
    if dir.exists(&file) {
        return toml::from_str(&dir.read(&file)?).map_err(|e| CliError::Data(format!("{file}: {e}")));
    }
    match manifest.calibration.iter().find(|c| c.lab == lab) {
        Some(c) if dir.exists(&c.vacuum) && dir.exists(&c.electronic) => compute_calibration(cfg, dir, manifest, lab),
        Some(c) => {
            let absent = if dir.exists(&c.vacuum) { &c.electronic } else { &c.vacuum };
            Err(CliError::Data(format!(
                "missing calibration for {lab}: neither {} nor {} exists",
                dir.path(&file).display(),
                dir.path(absent).display()
            )))
        }
        None => Err(CliError::Data(format!("missing calibration for {lab}: {} not found", dir.path(&file).display()))),
    }
}

/// Heterodyne detection factor ½·T·η of one receiver, with the balanced
/// split of a two-party link.
fn detection_factor(s: &Scenario, lab: usize) -> f64 {
    let eta = s.receiver.detector_efficiency;
    match &s.lab1 {
        None => 0.5 * s.transmissivity(),
        Some(arm) => {
            let t = if lab == 0 { arm.transmissivity() } else { s.channel.transmissivity() };
            0.25 * t * eta
        }
    }
}

struct LabRun {
    lab: String,
    results: Vec<FrameResult>,
    electronic_fraction: f64,
}

pub fn run(cfg: &RunConfig, dir: &RunDir, stages: bool) -> Result<()> {
    let manifest = dir.manifest()?;
    let dsp_cfg = cfg.scenario.dsp_config();
    let pool = pool(cfg.jobs)?;
    let mut runs = Vec::new();
    for lab in &manifest.labs {
        let cal = calibration(cfg, dir, &manifest, lab)?;
        let mut entries: Vec<_> = manifest.traces.iter().filter(|t| &t.lab == lab).collect();
        entries.sort_by_key(|t| t.frame);
        if entries.is_empty() {
            return Err(CliError::Data(format!("manifest lists no traces for {lab}")));
        }
        let results: Vec<FrameResult> = pool.install(|| {
            entries
                .par_iter()
                .map(|t| {
                    eprintln!("reconstruct: {lab} frame {}", t.frame);
                    let trace = dir.load_trace(&t.file)?;
                    dsp::reconstruct_frame(&trace, &cal, &dsp_cfg, stages)
                        .map_err(|e| CliError::dsp(&format!("{lab} frame {}", t.frame), e))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let electronic_fraction = results.iter().map(|r| r.electronic_fraction).sum::<f64>() / results.len() as f64;
        for (t, r) in entries.iter().zip(&results) {
            dir.save_ensemble(&format!("ensembles/{lab}_frame{:03}.sqzq", t.frame), &r.ensemble)?;
            if let Some(st) = &r.stages {
                for (name, e) in [("post_frequency", &st.post_frequency), ("post_phase", &st.post_phase), ("post_rotation", &st.post_rotation)] {
                    dir.save_ensemble(&format!("stages/{lab}_frame{:03}_{name}.sqzq", t.frame), e)?;
                }
            }
        }
        let summaries = entries.iter().zip(&results).map(|(t, r)| r.summary(t.frame)).collect();
        let record = ReconstructionRecord::new(summaries, electronic_fraction);
        dir.write(&record_file(lab), &record.to_toml())?;
        if manifest.channels == 2 {
            write_polarization(dir, lab, &entries[0].file)?;
        }
        runs.push(LabRun { lab: lab.clone(), results, electronic_fraction });
    }

    write_frames_csv(dir, &runs)?;
    write_psd_csv(cfg, dir, &runs)?;
    if let [a, b] = runs.as_slice() {
        let cov = covariance(a, b)?;
        dir.write(COVARIANCE, &cov.to_text())?;
    }
    Ok(())
}

fn covariance(a: &LabRun, b: &LabRun) -> Result<sqzrx::gaussian::CovMatrix4> {
    let mut parts = (Vec::new(), Vec::new());
    for (ra, rb) in a.results.iter().zip(&b.results) {
        let n = ra.ensemble.len().min(rb.ensemble.len());
        let cut = |e: &QuadratureEnsemble| QuadratureEnsemble { x: e.x[..n].to_vec(), p: e.p[..n].to_vec(), ..e.clone() };
        parts.0.push(cut(&ra.ensemble));
        parts.1.push(cut(&rb.ensemble));
    }
    let e1 = QuadratureEnsemble::concat(&parts.0).ok_or_else(|| CliError::Data(format!("no frames for {}", a.lab)))?;
    let e2 = QuadratureEnsemble::concat(&parts.1).ok_or_else(|| CliError::Data(format!("no frames for {}", b.lab)))?;
    estimate_covariance(&e1, &e2, [a.electronic_fraction, b.electronic_fraction]).map_err(CliError::gaussian)
}

fn write_frames_csv(dir: &RunDir, runs: &[LabRun]) -> Result<()> {
    let mut w = dir.csv_writer("frames.csv")?;
    w.write_record([
        "lab", "frame", "states", "carrier_hz", "clock_ppm", "theta", "phi", "residual_y_db", "phi_tilde", "var_x", "var_p",
        "cov_xp", "squeezing_db", "antisqueezing_db",
    ])
    .map_err(csv_err)?;
    for run in runs {
        for (i, r) in run.results.iter().enumerate() {
            let s = r.summary(i);
            w.write_record([
                run.lab.clone(),
                i.to_string(),
                s.states.to_string(),
                s.carrier_hz.to_string(),
                r.clock.ppm().to_string(),
                opt(s.theta),
                opt(s.phi),
                opt(s.residual_y_db),
                opt(s.phi_tilde),
                s.var_x.to_string(),
                s.var_p.to_string(),
                s.cov_xp.to_string(),
                s.squeezing_db.to_string(),
                s.antisqueezing_db.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

/// Normalized quadrature spectra of each receiver's first frame, with the
/// source model for comparison.
fn write_psd_csv(cfg: &RunConfig, dir: &RunDir, runs: &[LabRun]) -> Result<()> {
    if runs.iter().all(|r| r.results[0].psd.is_none()) {
        return Ok(());
    }
    let mut w = dir.csv_writer("psd.csv")?;
    w.write_record(["lab", "freq_hz", "x_db", "p_db", "model_x_db", "model_p_db"]).map_err(csv_err)?;
    for (k, run) in runs.iter().enumerate() {
        let Some(psd) = &run.results[0].psd else { continue };
        let ctx = |e| CliError::dsp(&format!("{} spectrum", run.lab), e);
        let x = psd.x.normalized_db(&psd.vacuum, Some(&psd.electronic)).map_err(ctx)?;
        let p = psd.p.normalized_db(&psd.vacuum, Some(&psd.electronic)).map_err(ctx)?;
        let d = detection_factor(&cfg.scenario, k);
        for (i, &f) in psd.x.freqs.iter().enumerate() {
            let (mx, mp) = received_spectrum(&cfg.scenario.squeezer, d, f.abs());
            w.write_record([run.lab.clone(), f.to_string(), x[i].to_string(), p[i].to_string(), db(mx).to_string(), db(mp).to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

/// Raw detector spectra of the first frame: pilot powers split between the
/// two polarization detectors according to the channel rotation.
fn write_polarization(dir: &RunDir, lab: &str, file: &str) -> Result<()> {
    let trace = dir.load_trace(file)?;
    let psds = (0..2)
        .map(|c| welch_psd(&trace.analog(c), POLARIZATION_NFFT, trace.sample_rate))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::dsp(&format!("{lab} detector spectrum"), e))?;
    let mut w = dir.csv_writer(&format!("polarization_{lab}.csv"))?;
    w.write_record(["freq_hz", "det_x_db", "det_y_db"]).map_err(csv_err)?;
    for (i, f) in psds[0].freqs.iter().enumerate() {
        w.write_record([f.to_string(), db(psds[0].values[i]).to_string(), db(psds[1].values[i]).to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}
