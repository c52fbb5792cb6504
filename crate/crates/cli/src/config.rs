//! Versioned TOML run configuration. Every field is optional; command-line
//! flags override it and built-in defaults fill the rest.
//!
//! Units follow the lab convention: microseconds for dead time, kilohertz
//! for frequency, nanoseconds for gate width, delay and jitter.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: Option<u32>,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub gate: GateSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub efficiency: Option<f64>,
    pub dead_time_us: Option<f64>,
    pub dark_rate_cps: Option<f64>,
    pub jitter_sigma_ns: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub frequency_khz: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub duration_s: Option<f64>,
    pub seed: Option<u64>,
    pub emit_trigger_channel: Option<bool>,
    /// `measured` or `intrinsic`.
    pub dark_convention: Option<String>,
    /// `binary` or `csv`.
    pub stream_format: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub gate_width_ns: Option<f64>,
    pub channel_delay_ns: Option<f64>,
    pub integration_time_s: Option<f64>,
    pub repeats: Option<usize>,
    /// `one_sided` or `symmetric`.
    pub window: Option<String>,
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// `mu` or `f`.
    pub mode: Option<String>,
    pub frequency_khz: Option<f64>,
    pub mu: Option<f64>,
    /// Swept values: `mu`, or frequencies in kHz.
    pub grid: Option<Vec<f64>>,
    pub engines: Option<Vec<String>>,
    pub dark_models: Option<Vec<String>>,
    pub duration_s: Option<f64>,
    pub seed: Option<u64>,
    pub dark_convention: Option<String>,
    pub measurements: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub observations: Option<PathBuf>,
    pub sweep_csv: Option<PathBuf>,
    pub sweep_manifest: Option<PathBuf>,
    pub column: Option<String>,
    /// Parameters held at their initial value: `eta`, `dead_time`, `dark_rate`.
    pub fixed: Option<Vec<String>>,
    pub counting_time_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// `csv` or `json`.
    pub format: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        match cfg.version {
            Some(CONFIG_VERSION) => Ok(cfg),
            Some(v) => Err(CliError::Validation(format!(
                "config {}: version {v} is not supported (expected {CONFIG_VERSION})",
                path.display()
            ))),
            None => Err(CliError::Validation(format!(
                "config {}: missing `version = {CONFIG_VERSION}`",
                path.display()
            ))),
        }
    }
}
