use std::path::Path;

use sqzrx::dsp::DspError;
use sqzrx::gaussian::GaussianError;
use sqzrx::qkd::QkdError;
use sqzrx::scenario::ScenarioError;
use sqzrx::simkit::SimError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("model: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn missing(path: &Path) -> Self {
        CliError::Data(format!("missing file {}", path.display()))
    }

    /// Model validation failures are config errors, file problems are data
    /// errors.
    pub fn sim(e: SimError) -> Self {
        match e {
            SimError::Io(_) | SimError::Format(_) => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }

    pub fn dsp(context: &str, e: DspError) -> Self {
        CliError::Numerical(format!("{context}: {e}"))
    }

    pub fn scenario(context: &str, e: ScenarioError) -> Self {
        match e {
            ScenarioError::Sim(s) => Self::sim(s),
            ScenarioError::Dsp(d) => Self::dsp(context, d),
        }
    }

    pub fn gaussian(e: GaussianError) -> Self {
        match e {
            GaussianError::Invalid(_) | GaussianError::Misaligned(..) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }

    pub fn qkd(e: QkdError) -> Self {
        match e {
            QkdError::BadBeta(_) => CliError::Config(e.to_string()),
            QkdError::Gaussian(g) => Self::gaussian(g),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
