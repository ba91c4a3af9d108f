//! `sqzrx`: end-to-end runs of the squeezed-light receiver with file-based
//! handoff between stages.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical-model
//! error.

mod config;
mod error;
mod files;
mod keyrate;
mod reconstruct;
mod report;
mod simulate;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::{CliError, Result};
use files::{RunDir, RUN_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "sqzrx", version, about = "Squeezed-light RF-heterodyne receiver: simulation, DSP and key rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML). Defaults to <out>/run.toml when present.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    out: PathBuf,
    /// Number of frames to simulate.
    #[arg(long, global = true, value_name = "N")]
    frames: Option<usize>,
    /// Comma-separated reconciliation efficiencies.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Also write the post-frequency, post-phase and post-rotation ensembles.
    #[arg(long, global = true)]
    stages: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate signal and calibration traces with a ground-truth manifest.
    Simulate,
    /// Measure vacuum and electronic-noise levels from calibration traces.
    Calibrate,
    /// Run the DSP chain on every trace; two receivers also give a covariance.
    Reconstruct,
    /// Key rates from a covariance file.
    Keyrate {
        /// Covariance file; defaults to <out>/covariance.toml.
        covariance: Option<PathBuf>,
    },
    /// Figures and a text summary of a run directory.
    Report,
    /// Recovered squeezing over a list of LO detunings.
    Sweep,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let stored = cli.out.join(RUN_CONFIG);
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None if stored.exists() => RunConfig::load(&stored)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.frames {
        cfg.scenario.frames = n;
    }
    if let Some(b) = &cli.beta {
        cfg.qkd.betas = b.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Report => {
            let out = report::run(&RunDir::new(&cli.out))?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} figure(s) and summary.txt to {}", out.figures.len(), cli.out.display());
            Ok(())
        }
        cmd => {
            let cfg = resolve(cli)?;
            let dir = RunDir::create(&cli.out)?;
            match cmd {
                Command::Simulate => {
                    let m = simulate::run(&cfg, &dir)?;
                    println!("wrote {} trace(s) to {}", m.traces.len(), cli.out.display());
                }
                Command::Calibrate => reconstruct::calibrate(&cfg, &dir)?,
                Command::Reconstruct => reconstruct::run(&cfg, &dir, cli.stages)?,
                Command::Keyrate { covariance } => {
                    let path = covariance.clone().unwrap_or_else(|| dir.path(reconstruct::COVARIANCE));
                    for r in keyrate::run(&cfg, &dir, &path)? {
                        println!("beta {}: K_X {:.4e}  K_P {:.4e}  K_XP {:.4e}", r.beta, r.k_x, r.k_p, r.k_xp);
                    }
                }
                Command::Sweep => {
                    for p in sweep::run(&cfg, &dir)? {
                        println!("{} MHz: {:.3} ± {:.3} dB", p.detuning_mhz, p.squeezing_db, p.se_db);
                    }
                }
                Command::Report => unreachable!(),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sqzrx: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
