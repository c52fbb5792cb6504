//! `spadsim`: evaluate, simulate, gate, sweep and fit from the command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 failure while
//! running.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<spad_deadtime::Error> for CliError {
    fn from(e: spad_deadtime::Error) -> Self {
        use spad_deadtime::Error as E;
        match e {
            E::Io(_) | E::NonConvergence { .. } | E::TimestampOverflow { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "spadsim", version, about = "Dead-time and dark-count model for free-running SPADs")]
pub struct Cli {
    /// TOML run configuration (flags take precedence).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed (base seed for sweeps).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files [default: out]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Format for tabular output [default: csv]
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DetectorArgs {
    /// Detection efficiency, 0..1 [default: 0.1]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Dead time, microseconds [default: 20.31]
    #[arg(long)]
    pub dead_time_us: Option<f64>,
    /// Laser-off dark count rate, counts/s [default: 805.2]
    #[arg(long)]
    pub dark_rate: Option<f64>,
    /// Gaussian timing jitter sigma, ns [default: 0.52 FWHM = 0.2208]
    #[arg(long, conflicts_with = "jitter_fwhm_ns")]
    pub jitter_sigma_ns: Option<f64>,
    /// Timing jitter given as FWHM, ns
    #[arg(long)]
    pub jitter_fwhm_ns: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SourceArgs {
    /// Laser repetition frequency, kHz
    #[arg(long)]
    pub freq_khz: Option<f64>,
    /// Mean photon number per pulse
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    #[value(alias = "one_sided")]
    OneSided,
    Symmetric,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GateArgs {
    /// Gate width, ns [default: 3]
    #[arg(long)]
    pub gate_ns: Option<f64>,
    /// Delay added to channel 1 before matching, ns
    #[arg(long, allow_hyphen_values = true)]
    pub delay_ns: Option<f64>,
    /// Counter window length, s [default: 1]
    #[arg(long)]
    pub integration_s: Option<f64>,
    /// Number of counter windows [default: 100]
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long, value_enum)]
    pub window: Option<WindowArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Measured,
    Intrinsic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StreamFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mu,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    #[value(alias = "closed_form")]
    ClosedForm,
    #[value(alias = "monte_carlo")]
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamArg {
    Eta,
    #[value(alias = "dead_time")]
    DeadTime,
    #[value(alias = "dark_rate")]
    DarkRate,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form count rates for one operating point.
    Evaluate {
        #[command(flatten)]
        detector: DetectorArgs,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Event-level simulation; writes a time-tag stream and a tally.
    Simulate {
        #[command(flatten)]
        detector: DetectorArgs,
        #[command(flatten)]
        source: SourceArgs,
        /// Acquisition length, s
        #[arg(long)]
        duration_s: Option<f64>,
        /// Leave out the channel-1 trigger tags
        #[arg(long)]
        no_triggers: bool,
        #[arg(long, value_enum)]
        dark_convention: Option<ConventionArg>,
        #[arg(long, value_enum)]
        stream_format: Option<StreamFormat>,
    },
    /// Gate filtering and counter-mode statistics for a time-tag file.
    Gate {
        /// Time-tag stream (binary or CSV)
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        gate: GateArgs,
    },
    /// Sweep mu or frequency in closed form and/or by Monte Carlo.
    Sweep {
        #[command(flatten)]
        detector: DetectorArgs,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Fixed frequency for a mu sweep, kHz
        #[arg(long)]
        freq_khz: Option<f64>,
        /// Fixed mu for a frequency sweep
        #[arg(long)]
        mu: Option<f64>,
        /// Swept values (mu, or kHz), comma separated
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long, value_enum, value_delimiter = ',')]
        engines: Option<Vec<EngineArg>>,
        #[arg(long, value_enum, value_delimiter = ',')]
        dark_models: Option<Vec<ModelArg>>,
        /// Monte Carlo acquisition per point, s [default: 100]
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long, value_enum)]
        dark_convention: Option<ConventionArg>,
        /// Measured reference CSV (mu or f_khz/f_hz, n_click, n_dark)
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[command(flatten)]
        gate: GateArgs,
    },
    /// Least-squares estimate of eta, dead time and dark rate.
    Fit {
        /// CSV with f_khz or f_hz, mu, n_click and optional weight
        #[arg(long, conflicts_with = "sweep_csv")]
        observations: Option<PathBuf>,
        /// Sweep CSV to fit (needs --sweep-manifest)
        #[arg(long, requires = "sweep_manifest")]
        sweep_csv: Option<PathBuf>,
        #[arg(long)]
        sweep_manifest: Option<PathBuf>,
        /// Sweep column holding the click rate [default: n_click_mc]
        #[arg(long)]
        column: Option<String>,
        /// Parameters to hold at their initial value
        #[arg(long, value_enum, value_delimiter = ',')]
        fix: Option<Vec<ParamArg>>,
        /// Counting time behind each rate, s; sets Poisson weights [default: 100]
        #[arg(long)]
        counting_time_s: Option<f64>,
        /// Initial guesses
        #[command(flatten)]
        initial: DetectorArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
