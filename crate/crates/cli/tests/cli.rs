use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "seed = 11\njobs = 2\n[scenario]\nframe_samples = 1048576\nframes = 2\n";

fn sqzrx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqzrx")).args(args).output().expect("binary runs")
}

fn config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

fn repo_file(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel).to_str().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn unknown_keys_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    for text in ["sead = 1\n", "[scenario.receiver]\nadc_rat = 1e9\n", "[qkd]\nbeta = [1.0]\n"] {
        let cfg = config(tmp.path(), text);
        let o = sqzrx(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("run"))]);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", stderr(&o));
        assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));
    }
}

#[test]
fn zero_duration_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "[scenario]\nframe_samples = 0\n");
    let out = tmp.path().join("run");
    let o = sqzrx(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.join("traces").exists());
}

#[test]
fn beta_above_one_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = sqzrx(&["keyrate", &repo_file("configs/published_covariance.toml"), "--config", &repo_file("configs/published_keyrates.toml"), "--out", s(tmp.path()), "--beta", "1.2"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!tmp.path().join("keyrate.toml").exists());
}

#[test]
fn published_covariance_gives_the_realistic_reconciliation_row() {
    let tmp = TempDir::new().unwrap();
    let o = sqzrx(&["keyrate", &repo_file("configs/published_covariance.toml"), "--config", &repo_file("configs/published_keyrates.toml"), "--out", s(tmp.path())]);
    ok(&o);
    let rows = csv_rows(&tmp.path().join("keyrate.csv"));
    let get = |r: &[String], i: usize| r[i].parse::<f64>().unwrap();
    assert_eq!(rows.len(), 2);
    // columns: beta, I_X, I_P, chi_full, chi_given_P, chi_given_X, K_X, K_P, K_XP
    assert_eq!(get(&rows[0], 0), 1.0);
    assert!((get(&rows[0], 6) / 2.49e-4 - 1.0).abs() < 0.25, "K_X {}", rows[0][6]);
    assert_eq!(get(&rows[1], 0), 0.95);
    assert!(get(&rows[1], 6) > 0.0 && get(&rows[1], 6) < 5e-5);
    assert_eq!(get(&rows[1], 7), 0.0);
    assert_eq!(get(&rows[1], 8), 0.0);
    assert_eq!(csv_rows(&tmp.path().join("keyrate_sweep.csv")).len(), 11);
}

#[test]
fn vacuum_covariance_has_no_key() {
    let tmp = TempDir::new().unwrap();
    let cov = tmp.path().join("vacuum.toml");
    let eye = "[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]";
    let nan = "[[nan, nan, nan, nan], [nan, nan, nan, nan], [nan, nan, nan, nan], [nan, nan, nan, nan]]";
    std::fs::write(&cov, format!("n_symbols = 1000000\nentries = {eye}\nse = {nan}\n")).unwrap();
    let cfg = config(tmp.path(), "[qkd]\nsetup = \"documented\"\n");
    let o = sqzrx(&["keyrate", s(&cov), "--config", s(&cfg), "--out", s(tmp.path())]);
    ok(&o);
    for row in csv_rows(&tmp.path().join("keyrate.csv")) {
        for k in &row[6..9] {
            assert_eq!(k.parse::<f64>().unwrap(), 0.0, "{row:?}");
        }
    }
}

#[test]
fn malformed_covariance_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let cov = tmp.path().join("bad.toml");
    std::fs::write(&cov, "n_symbols = 10\nentries = [[1.0]]\nse = [[1.0]]\n").unwrap();
    let cfg = config(tmp.path(), "[qkd]\nsetup = \"documented\"\n");
    let o = sqzrx(&["keyrate", s(&cov), "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

/// simulate, reconstruct and keyrate chained on the stored run config.
fn chain(out: &Path, cfg: &Path) {
    ok(&sqzrx(&["simulate", "--config", s(cfg), "--out", s(out)]));
    ok(&sqzrx(&["reconstruct", "--out", s(out), "--stages"]));
    ok(&sqzrx(&["keyrate", "--out", s(out)]));
}

#[test]
fn chained_stages_are_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    chain(&a, &cfg);
    chain(&b, &cfg);

    let mut files = vec![
        "run.toml", "manifest.toml", "covariance.toml", "keyrate.toml", "keyrate.csv", "frames.csv", "psd.csv",
        "record_lab1.toml", "record_lab2.toml",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for lab in ["lab1", "lab2"] {
        for f in 0..2 {
            files.push(format!("traces/{lab}_frame{f:03}.sqzt"));
            files.push(format!("ensembles/{lab}_frame{f:03}.sqzq"));
            for stage in ["post_frequency", "post_phase", "post_rotation"] {
                files.push(format!("stages/{lab}_frame{f:03}_{stage}.sqzq"));
            }
        }
    }
    for f in &files {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert!(x == y, "{f} differs between identical runs");
    }
    // one row per receiver and frame
    assert_eq!(csv_rows(&a.join("frames.csv")).len(), 4);

    // a different seed changes the data
    let c = tmp.path().join("c");
    ok(&sqzrx(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "12"]));
    assert_ne!(std::fs::read(a.join("traces/lab1_frame000.sqzt")).unwrap(), std::fs::read(c.join("traces/lab1_frame000.sqzt")).unwrap());
}

#[test]
fn missing_calibration_names_the_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    ok(&sqzrx(&["simulate", "--config", s(&cfg), "--out", s(&out), "--frames", "1"]));
    std::fs::remove_file(out.join("calibration/lab2_vacuum.sqzt")).unwrap();
    let o = sqzrx(&["reconstruct", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("lab2_vacuum.sqzt"), "{}", stderr(&o));

    // a stored calibration replaces the traces
    std::fs::remove_dir_all(&out).unwrap();
    ok(&sqzrx(&["simulate", "--config", s(&cfg), "--out", s(&out), "--frames", "1"]));
    ok(&sqzrx(&["calibrate", "--out", s(&out)]));
    for lab in ["lab1", "lab2"] {
        std::fs::remove_file(out.join(format!("calibration/{lab}_vacuum.sqzt"))).unwrap();
    }
    ok(&sqzrx(&["reconstruct", "--out", s(&out)]));
}

#[test]
fn vacuum_input_reconstructs_to_unit_variance() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "preset = \"rf-het\"\n[scenario]\nframe_samples = 4194304\nframes = 1\n\
         [scenario.squeezer]\npump_ratio = 0.0\n[scenario.pilots]\nfrequencies = []\npowers_db = []\n",
    );
    let out = tmp.path().join("run");
    ok(&sqzrx(&["simulate", "--config", s(&cfg), "--out", s(&out)]));
    ok(&sqzrx(&["reconstruct", "--out", s(&out)]));
    let rows = csv_rows(&out.join("frames.csv"));
    // columns: lab, frame, states, ..., squeezing_db, antisqueezing_db
    let n: f64 = rows[0][2].parse().unwrap();
    for db in [&rows[0][12], &rows[0][13]] {
        let v = 10f64.powf(db.parse::<f64>().unwrap() / 10.0);
        assert!((v - 1.0).abs() <= 4.0 / n.sqrt(), "variance {v} with {n} states");
    }
    assert!(!out.join("covariance.toml").exists());
}

#[test]
fn report_of_an_empty_directory_warns() {
    let tmp = TempDir::new().unwrap();
    let o = sqzrx(&["report", "--out", s(tmp.path())]);
    ok(&o);
    assert!(stderr(&o).contains("warning"));
    assert_eq!(std::fs::read_to_string(tmp.path().join("summary.txt")).unwrap(), "");
    let o = sqzrx(&["report", "--out", s(&tmp.path().join("absent"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn full_run_reports_four_figures() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), &format!("{SMALL}[sweep]\ndetunings_mhz = [18.0, 100.0]\nframe_samples = 1048576\n"));
    let out = tmp.path().join("run");
    chain(&out, &cfg);
    let o = sqzrx(&["report", "--out", s(&out)]);
    ok(&o);
    assert!(stderr(&o).contains("sweep.csv"), "partial run should warn about the missing sweep");
    assert!(!out.join("fig_detuning.svg").exists());

    ok(&sqzrx(&["sweep", "--out", s(&out)]));
    let o = sqzrx(&["report", "--out", s(&out)]);
    ok(&o);
    for name in ["fig_psd", "fig_detuning", "fig_polarization", "fig_frames"] {
        let svg = std::fs::read_to_string(out.join(format!("{name}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"), "{name}");
    }
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    for needle in ["lab1:", "lab2:", "detuning sweep:", "beta 1:"] {
        assert!(summary.contains(needle), "{needle} missing from\n{summary}");
    }
    assert_eq!(csv_rows(&out.join("sweep.csv")).len(), 2);
}
