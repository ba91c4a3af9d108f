use std::path::Path;

use serde::Serialize;
use sqzrx::dsp::ReconstructionRecord;
use sqzrx::gaussian::{build_purification, ArmModel, CovMatrix4, DetectorModel, PurificationInput, SourceFit};
use sqzrx::qkd::{documented_setup, key_rates, KeyRateReport, KeyScenario, Lab};

use crate::config::{Reference, RunConfig, Setup};
use crate::error::{CliError, Result};
use crate::files::{csv_err, to_toml, RunDir};
use crate::reconstruct::record_file;

#[derive(Debug, Serialize)]
struct FitRecord {
    v_sq: f64,
    v_asq: f64,
    excess: [f64; 2],
    max_rel_error: f64,
}

#[derive(Debug, Serialize)]
struct ArmRecord {
    loss_db: f64,
    fit_excess: bool,
    efficiency: f64,
    electronic: f64,
}

#[derive(Debug, Serialize)]
struct KeyRateFile {
    setup: Setup,
    reference: Reference,
    n_symbols: u64,
    arms: Vec<ArmRecord>,
    fit: FitRecord,
    reports: Vec<KeyRateReport>,
}

/// Trusted-detector model of the simulated link. Electronic noise comes from
/// the reconstruction records as a share e of the vacuum calibration and is
/// converted to heterodyne-outcome units e/(1 − e).
fn scenario_setup(cfg: &RunConfig, dir: &RunDir) -> Result<PurificationInput> {
    let s = &cfg.scenario;
    let lab1 = s.lab1.as_ref().ok_or_else(|| {
        CliError::Config("qkd.setup = \"scenario\" needs a two-party scenario (preset \"10km\" or [scenario.lab1])".into())
    })?;
    let mut arms = Vec::new();
    for (lab, loss_db) in [("lab1", lab1.loss_db), ("lab2", s.channel.loss_db)] {
        let file = record_file(lab);
        let rec = ReconstructionRecord::from_toml(&dir.read(&file)?).map_err(|e| CliError::Data(format!("{file}: {e}")))?;
        let e = rec.electronic_fraction;
        arms.push(ArmModel {
            loss_db,
            excess_noise: 0.0,
            fit_excess: true,
            detector: DetectorModel { efficiency: s.receiver.detector_efficiency, electronic: e / (1.0 - e) },
        });
    }
    Ok(PurificationInput { arms: [arms[0], arms[1]], source_untrusted_fraction: cfg.qkd.source_untrusted_fraction })
}

fn betas(cfg: &RunConfig) -> Vec<f64> {
    match &cfg.qkd.beta_sweep {
        None => vec![],
        Some(s) => (0..s.points).map(|i| s.from + (s.to - s.from) * i as f64 / (s.points - 1) as f64).collect(),
    }
}

pub fn run(cfg: &RunConfig, dir: &RunDir, covariance: &Path) -> Result<Vec<KeyRateReport>> {
    let scenarios = cfg.qkd.betas.iter().map(|&b| KeyScenario::new(b)).collect::<std::result::Result<Vec<_>, _>>();
    let mut scenarios = scenarios.map_err(CliError::qkd)?;
    let reference = match cfg.qkd.reference {
        Reference::Lab1 => Lab::Lab1,
        Reference::Lab2 => Lab::Lab2,
    };
    scenarios.iter_mut().for_each(|k| k.reference = reference);

    if !covariance.exists() {
        return Err(CliError::missing(covariance));
    }
    let text = std::fs::read_to_string(covariance).map_err(|e| CliError::io(covariance, e))?;
    let cov = CovMatrix4::from_text(&text).map_err(|e| match e {
        sqzrx::gaussian::GaussianError::Invalid(m) => CliError::Data(format!("{}: {m}", covariance.display())),
        other => CliError::Numerical(format!("{}: {other}", covariance.display())),
    })?;
    let input = match cfg.qkd.setup {
        Setup::Documented => PurificationInput { source_untrusted_fraction: cfg.qkd.source_untrusted_fraction, ..documented_setup() },
        Setup::Scenario => scenario_setup(cfg, dir)?,
    };
    let state = build_purification(&cov, &input).map_err(CliError::gaussian)?;
    let reports = scenarios.iter().map(|k| key_rates(&cov, k, &state)).collect::<std::result::Result<Vec<_>, _>>();
    let reports = reports.map_err(CliError::qkd)?;

    let SourceFit { v_sq, v_asq, excess, max_rel_error } = state.fit;
    let file = KeyRateFile {
        setup: cfg.qkd.setup,
        reference: cfg.qkd.reference,
        n_symbols: cov.n_symbols,
        arms: input
            .arms
            .iter()
            .map(|a| ArmRecord {
                loss_db: a.loss_db,
                fit_excess: a.fit_excess,
                efficiency: a.detector.efficiency,
                electronic: a.detector.electronic,
            })
            .collect(),
        fit: FitRecord { v_sq, v_asq, excess, max_rel_error },
        reports: reports.clone(),
    };
    dir.write("keyrate.toml", &to_toml(&file))?;
    write_csv(dir, "keyrate.csv", &reports)?;

    let sweep = betas(cfg);
    if !sweep.is_empty() {
        let rows = sweep
            .iter()
            .map(|&b| {
                let k = KeyScenario { reference, ..KeyScenario::new(b)? };
                key_rates(&cov, &k, &state)
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(CliError::qkd)?;
        write_csv(dir, "keyrate_sweep.csv", &rows)?;
    }
    Ok(reports)
}

fn write_csv(dir: &RunDir, name: &str, rows: &[KeyRateReport]) -> Result<()> {
    let mut w = dir.csv_writer(name)?;
    w.write_record(KeyRateReport::CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.csv_row()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}
