//! Static figures and a text summary from whatever a run directory holds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use plotters::prelude::*;
use sqzrx::dsp::ReconstructionRecord;

use crate::error::{CliError, Result};
use crate::files::RunDir;

type Row = BTreeMap<String, String>;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    markers: bool,
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(23, 190, 207),
];

fn range(vals: impl Iterator<Item = f64> + Clone) -> std::ops::Range<f64> {
    let lo = vals.clone().fold(f64::INFINITY, f64::min);
    let hi = vals.fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad)..(hi + pad)
}

fn chart(path: &Path, title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> Result<()> {
    let err = |e: String| CliError::Data(format!("{}: {e}", path.display()));
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    if pts().next().is_none() {
        return Err(err("nothing to plot".into()));
    }
    let root = SVGBackend::new(path, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut c = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(range(pts().map(|p| p.0)), range(pts().map(|p| p.1)))
        .map_err(|e| err(e.to_string()))?;
    c.configure_mesh().x_desc(xlabel).y_desc(ylabel).draw().map_err(|e| err(e.to_string()))?;
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let data: Vec<_> = s.points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        let drawn = c.draw_series(LineSeries::new(data.clone(), color.stroke_width(2))).map_err(|e| err(e.to_string()))?;
        drawn.label(s.label.clone()).legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        if s.markers {
            c.draw_series(data.iter().map(|&p| Circle::new(p, 4, color.filled()))).map_err(|e| err(e.to_string()))?;
        }
    }
    c.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))
}

fn num(row: &Row, key: &str) -> f64 {
    row.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

fn column(rows: &[Row], filter: impl Fn(&Row) -> bool, x: &str, y: &str, xscale: f64) -> Vec<(f64, f64)> {
    rows.iter().filter(|r| filter(r)).map(|r| (num(r, x) * xscale, num(r, y))).collect()
}

fn labs(rows: &[Row]) -> Vec<String> {
    let mut v: Vec<String> = rows.iter().filter_map(|r| r.get("lab").cloned()).collect();
    v.dedup();
    v
}

fn optional_csv(dir: &RunDir, name: &str, warnings: &mut Vec<String>) -> Result<Option<Vec<Row>>> {
    if !dir.exists(name) {
        warnings.push(format!("{name} not found"));
        return Ok(None);
    }
    dir.read_csv(name).map(Some)
}

pub struct Outcome {
    pub figures: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn run(dir: &RunDir) -> Result<Outcome> {
    if !dir.root.is_dir() {
        return Err(CliError::Data(format!("run directory {} does not exist", dir.root.display())));
    }
    let mut warnings = Vec::new();
    let mut figures = Vec::new();
    let mut summary = String::new();
    let fig = |name: &str| dir.path(&format!("{name}.svg"));

    if dir.exists(crate::files::MANIFEST) {
        let m = dir.manifest()?;
        writeln!(
            summary,
            "scenario {} seed {}: {} receiver(s), {} frame(s) of {} samples at {} S/s",
            m.scenario,
            m.seed,
            m.labs.len(),
            m.frames,
            m.frame_samples,
            m.sample_rate
        )
        .unwrap();
        writeln!(summary, "expected mode variances (single receiver): X {:.4} dB, P {:.4} dB", db(m.expected_var_x), db(m.expected_var_p))
            .unwrap();
        for lab in &m.labs {
            let file = crate::reconstruct::record_file(lab);
            if !dir.exists(&file) {
                warnings.push(format!("{file} not found"));
                continue;
            }
            let rec = ReconstructionRecord::from_toml(&dir.read(&file)?).map_err(|e| CliError::Data(format!("{file}: {e}")))?;
            writeln!(
                summary,
                "{lab}: squeezing {:.3} dB, anti-squeezing {:.3} dB over {} frame(s), electronic fraction {:.4}",
                rec.mean_squeezing_db,
                rec.mean_antisqueezing_db,
                rec.frames.len(),
                rec.electronic_fraction
            )
            .unwrap();
        }
    } else {
        warnings.push(format!("{} not found", crate::files::MANIFEST));
    }

    if let Some(rows) = optional_csv(dir, "frames.csv", &mut warnings)? {
        let mut series = Vec::new();
        for lab in labs(&rows) {
            for (key, name) in [("squeezing_db", "squeezing"), ("antisqueezing_db", "anti-squeezing")] {
                let points = column(&rows, |r| r.get("lab") == Some(&lab), "frame", key, 1.0);
                series.push(Series { label: format!("{lab} {name}"), points, markers: true });
            }
        }
        chart(&fig("fig_frames"), "Per-frame squeezing", "frame", "variance relative to vacuum (dB)", &series)?;
        figures.push("fig_frames".into());
    }

    if let Some(rows) = optional_csv(dir, "psd.csv", &mut warnings)? {
        let mut series = Vec::new();
        for lab in labs(&rows) {
            let own = |r: &Row| r.get("lab") == Some(&lab) && num(r, "freq_hz") > 0.0;
            for (key, name) in [("x_db", "X"), ("p_db", "P"), ("model_x_db", "X model"), ("model_p_db", "P model")] {
                series.push(Series { label: format!("{lab} {name}"), points: column(&rows, own, "freq_hz", key, 1e-6), markers: false });
            }
        }
        chart(&fig("fig_psd"), "Quadrature noise spectra", "frequency (MHz)", "PSD relative to vacuum (dB)", &series)?;
        figures.push("fig_psd".into());
    }

    if let Some(rows) = optional_csv(dir, "sweep.csv", &mut warnings)? {
        let all = |_: &Row| true;
        let series = [
            Series { label: "recovered".into(), points: column(&rows, all, "detuning_mhz", "squeezing_db", 1.0), markers: true },
            Series { label: "model".into(), points: column(&rows, all, "detuning_mhz", "expected_squeezing_db", 1.0), markers: false },
        ];
        chart(&fig("fig_detuning"), "Squeezing against LO detuning", "LO detuning (MHz)", "squeezing (dB)", &series)?;
        figures.push("fig_detuning".into());
        let line: Vec<String> =
            rows.iter().map(|r| format!("{} MHz {:.3} ± {:.3} dB", num(r, "detuning_mhz"), num(r, "squeezing_db"), num(r, "se_db"))).collect();
        writeln!(summary, "detuning sweep: {}", line.join(", ")).unwrap();
    }

    let pol_files = polarization_files(dir)?;
    if pol_files.is_empty() {
        warnings.push("no polarization_*.csv found".into());
    } else {
        let mut series = Vec::new();
        for (lab, file) in &pol_files {
            let rows = dir.read_csv(file)?;
            let band = |r: &Row| num(r, "freq_hz") <= 250e6;
            for (key, name) in [("det_x_db", "detector X"), ("det_y_db", "detector Y")] {
                series.push(Series { label: format!("{lab} {name}"), points: column(&rows, band, "freq_hz", key, 1e-6), markers: false });
            }
        }
        chart(&fig("fig_polarization"), "Detector spectra behind the polarization splitter", "frequency (MHz)", "PSD (dB, ADC units)", &series)?;
        figures.push("fig_polarization".into());
    }

    if let Some(rows) = optional_csv(dir, "keyrate.csv", &mut warnings)? {
        for r in &rows {
            writeln!(summary, "beta {}: K_X {:.4e}, K_P {:.4e}, K_XP {:.4e} bits/symbol", num(r, "beta"), num(r, "K_X"), num(r, "K_P"), num(r, "K_XP"))
                .unwrap();
        }
    }

    if !figures.is_empty() {
        writeln!(summary, "figures: {}", figures.join(", ")).unwrap();
    }
    dir.write("summary.txt", &summary)?;
    Ok(Outcome { figures, warnings })
}

fn db(v: f64) -> f64 {
    sqzrx::ensemble::db(v)
}

fn polarization_files(dir: &RunDir) -> Result<Vec<(String, String)>> {
    let entries = std::fs::read_dir(&dir.root).map_err(|e| CliError::io(&dir.root, e))?;
    let mut out: Vec<(String, String)> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|n| {
            let lab = n.strip_prefix("polarization_")?.strip_suffix(".csv")?.to_string();
            Some((lab, n))
        })
        .collect();
    out.sort();
    Ok(out)
}
