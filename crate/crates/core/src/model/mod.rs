//! Closed-form count-rate model of a free-running SPAD under pulsed light.
//!
//! A pulse train of repetition frequency `f` carries on average `mu` photons
//! per pulse. The detector has efficiency `eta`, a fixed non-extended dead
//! time `D` and a dark-count rate `N_dark` measured with the light blocked.
//!
//! * `q = 1 - exp(-eta * mu)` is the per-pulse detection probability.
//! * `Int(fD) = floor(f * D)` pulses follow every click inside its dead time,
//!   so the click probability per pulse drops to `q / (1 + Int(fD) q)`.
//! * Laser clicks blind the detector for a fraction `f p_click D` of the time,
//!   which suppresses dark counts to `N_dark (1 - f p_click D)`.
//! * The photon term is further scaled by `p_no_dc = exp(-N_dark D)`, the
//!   chance that no dark count occupied the detector just before the pulse.
//!
//! Everything here is a pure function of its arguments.

mod power;

pub use power::{mean_photon_number, PowerCalibration, PLANCK_CONSTANT, SPEED_OF_LIGHT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conversion factor between a Gaussian FWHM and its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// `N_dark * D` above which `exp(-N_dark D)` is no longer a good stand-in
/// for the probability of a dark-count-free dead-time window.
pub const DARK_DEAD_TIME_WARNING: f64 = 0.1;

/// Physical parameters of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetectorParams", into = "RawDetectorParams")]
pub struct DetectorParams {
    efficiency: f64,
    dead_time: f64,
    dark_rate: f64,
    timing_jitter_sigma: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawDetectorParams {
    efficiency: f64,
    dead_time_s: f64,
    dark_rate_cps: f64,
    timing_jitter_sigma_s: f64,
}

impl TryFrom<RawDetectorParams> for DetectorParams {
    type Error = Error;

    fn try_from(raw: RawDetectorParams) -> Result<Self> {
        DetectorParams::new(raw.efficiency, raw.dead_time_s, raw.dark_rate_cps)?
            .with_timing_jitter_sigma(raw.timing_jitter_sigma_s)
    }
}

impl From<DetectorParams> for RawDetectorParams {
    fn from(det: DetectorParams) -> Self {
        RawDetectorParams {
            efficiency: det.efficiency,
            dead_time_s: det.dead_time,
            dark_rate_cps: det.dark_rate,
            timing_jitter_sigma_s: det.timing_jitter_sigma,
        }
    }
}

impl DetectorParams {
    /// `efficiency` in [0, 1], `dead_time` in seconds, `dark_rate` in counts/s.
    /// Timing jitter starts at zero.
    pub fn new(efficiency: f64, dead_time: f64, dark_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::invalid("efficiency", format!("{efficiency} not in [0, 1]")));
        }
        if !(dead_time.is_finite() && dead_time > 0.0) {
            return Err(Error::invalid("dead_time", format!("{dead_time} s must be > 0")));
        }
        if !(dark_rate.is_finite() && dark_rate >= 0.0) {
            return Err(Error::invalid("dark_rate", format!("{dark_rate} cps must be >= 0")));
        }
        Ok(DetectorParams {
            efficiency,
            dead_time,
            dark_rate,
            timing_jitter_sigma: 0.0,
        })
    }

    /// InGaAs/InP SPAD at 1550 nm: 10 % efficiency, 20.31 us dead time,
    /// 805.2 counts/s dark rate and 0.52 ns (FWHM) timing jitter.
    pub fn reference_ingaas() -> Self {
        DetectorParams {
            efficiency: 0.1,
            dead_time: 20.31e-6,
            dark_rate: 805.2,
            timing_jitter_sigma: 0.52e-9 / FWHM_PER_SIGMA,
        }
    }

    pub fn with_timing_jitter_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid("timing_jitter_sigma", format!("{sigma} s must be >= 0")));
        }
        self.timing_jitter_sigma = sigma;
        Ok(self)
    }

    pub fn with_efficiency(self, efficiency: f64) -> Result<Self> {
        Self::new(efficiency, self.dead_time, self.dark_rate)?
            .with_timing_jitter_sigma(self.timing_jitter_sigma)
    }

    pub fn with_dead_time(self, dead_time: f64) -> Result<Self> {
        Self::new(self.efficiency, dead_time, self.dark_rate)?
            .with_timing_jitter_sigma(self.timing_jitter_sigma)
    }

    pub fn with_dark_rate(self, dark_rate: f64) -> Result<Self> {
        Self::new(self.efficiency, self.dead_time, dark_rate)?
            .with_timing_jitter_sigma(self.timing_jitter_sigma)
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Dead time in seconds.
    pub fn dead_time(&self) -> f64 {
        self.dead_time
    }

    /// Dead time rounded to the picosecond grid used by the simulator.
    pub fn dead_time_ps(&self) -> i64 {
        (self.dead_time * 1e12).round() as i64
    }

    /// Dark-count rate measured with the light blocked, counts/s.
    pub fn dark_rate(&self) -> f64 {
        self.dark_rate
    }

    /// Standard deviation of the click timing jitter, seconds.
    pub fn timing_jitter_sigma(&self) -> f64 {
        self.timing_jitter_sigma
    }

    /// Set when `N_dark * D` is large enough that `p_no_dc` is a poor
    /// approximation.
    pub fn dark_dead_time_warning(&self) -> bool {
        self.dark_rate * self.dead_time > DARK_DEAD_TIME_WARNING
    }
}

/// Pulsed-source parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSourceParams", into = "RawSourceParams")]
pub struct SourceParams {
    repetition_frequency: f64,
    mean_photon_number: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawSourceParams {
    repetition_frequency_hz: f64,
    mean_photon_number: f64,
}

impl TryFrom<RawSourceParams> for SourceParams {
    type Error = Error;

    fn try_from(raw: RawSourceParams) -> Result<Self> {
        SourceParams::new(raw.repetition_frequency_hz, raw.mean_photon_number)
    }
}

impl From<SourceParams> for RawSourceParams {
    fn from(src: SourceParams) -> Self {
        RawSourceParams {
            repetition_frequency_hz: src.repetition_frequency,
            mean_photon_number: src.mean_photon_number,
        }
    }
}

impl SourceParams {
    pub fn new(repetition_frequency: f64, mean_photon_number: f64) -> Result<Self> {
        if !(repetition_frequency.is_finite() && repetition_frequency > 0.0) {
            return Err(Error::invalid(
                "repetition_frequency",
                format!("{repetition_frequency} Hz must be > 0"),
            ));
        }
        // +inf is allowed: it is the saturation limit.
        if mean_photon_number.is_nan() || mean_photon_number < 0.0 {
            return Err(Error::invalid(
                "mean_photon_number",
                format!("{mean_photon_number} must be >= 0"),
            ));
        }
        Ok(SourceParams {
            repetition_frequency,
            mean_photon_number,
        })
    }

    /// Repetition frequency in hertz.
    pub fn repetition_frequency(&self) -> f64 {
        self.repetition_frequency
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.mean_photon_number
    }
}

/// Which dark-count model to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DarkModel {
    /// Dark counts suppressed by the dead time of laser clicks, with the
    /// `Int(fD)` ladder.
    A,
    /// Paralysis-style correction `N / (1 + (f q + N) D)` without the ladder.
    B,
    /// Constant dark-count rate.
    C,
}

impl DarkModel {
    pub const ALL: [DarkModel; 3] = [DarkModel::A, DarkModel::B, DarkModel::C];

    pub fn rate(self, det: &DetectorParams, src: &SourceParams) -> f64 {
        match self {
            DarkModel::A => dark_rate_model_a(det, src),
            DarkModel::B => dark_rate_model_b(det, src),
            DarkModel::C => dark_rate_model_c(det),
        }
    }
}

/// Evaluated model outputs for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub q: f64,
    pub p_click: f64,
    pub p_no_dc: f64,
    pub int_fd: u64,
    pub photon_click_rate: f64,
    pub dark_rate: f64,
    pub total_rate: f64,
    /// A rate came out negative before clamping to zero.
    pub clamped: bool,
    /// `N_dark * D` exceeds [`DARK_DEAD_TIME_WARNING`].
    pub approximation_warning: bool,
}

/// Number of whole pulse periods inside one dead time, `floor(f * D)`.
pub fn dead_time_ladder(repetition_frequency: f64, dead_time: f64) -> u64 {
    (repetition_frequency * dead_time).floor() as u64
}

/// `q = 1 - exp(-eta mu)`.
pub fn detection_probability(det: &DetectorParams, src: &SourceParams) -> f64 {
    detection_probability_raw(det.efficiency, src.mean_photon_number)
}

pub(crate) fn detection_probability_raw(efficiency: f64, mean_photon_number: f64) -> f64 {
    if efficiency == 0.0 || mean_photon_number == 0.0 {
        return 0.0;
    }
    -(-efficiency * mean_photon_number).exp_m1()
}

/// `p_click = q / (1 + Int(fD) q)`; equals `q` whenever `f D < 1`.
pub fn click_probability(det: &DetectorParams, src: &SourceParams) -> f64 {
    let q = detection_probability(det, src);
    let ladder = dead_time_ladder(src.repetition_frequency, det.dead_time);
    click_probability_raw(q, ladder)
}

pub(crate) fn click_probability_raw(q: f64, ladder: u64) -> f64 {
    if ladder == 0 {
        q
    } else {
        q / (1.0 + ladder as f64 * q)
    }
}

/// Model A: `N_dark (1 - p_click f D)`, clamped at zero.
pub fn dark_rate_model_a(det: &DetectorParams, src: &SourceParams) -> f64 {
    dark_rate_model_a_raw(det, src).max(0.0)
}

fn dark_rate_model_a_raw(det: &DetectorParams, src: &SourceParams) -> f64 {
    let p_click = click_probability(det, src);
    det.dark_rate * (1.0 - p_click * src.repetition_frequency * det.dead_time)
}

/// Model B: `N_dark / (1 + (f q + N_dark) D)`.
pub fn dark_rate_model_b(det: &DetectorParams, src: &SourceParams) -> f64 {
    let q = detection_probability(det, src);
    det.dark_rate / (1.0 + (src.repetition_frequency * q + det.dark_rate) * det.dead_time)
}

/// Model C: the dark rate does not depend on the light at all.
pub fn dark_rate_model_c(det: &DetectorParams) -> f64 {
    det.dark_rate
}

/// Full count-rate model: `N_click = f p_click p_no_dc + N_dark (1 - p_click f D)`.
pub fn total_click_rate(det: &DetectorParams, src: &SourceParams) -> RateBreakdown {
    let f = src.repetition_frequency;
    let q = detection_probability(det, src);
    let int_fd = dead_time_ladder(f, det.dead_time);
    let p_click = click_probability_raw(q, int_fd);
    let p_no_dc = (-det.dark_rate * det.dead_time).exp();

    let photon_click_rate = f * p_click * p_no_dc;
    let raw_dark = dark_rate_model_a_raw(det, src);
    let clamped = raw_dark < 0.0 || photon_click_rate.is_nan();
    let dark_rate = raw_dark.max(0.0);

    RateBreakdown {
        q,
        p_click,
        p_no_dc,
        int_fd,
        photon_click_rate,
        dark_rate,
        total_rate: photon_click_rate + dark_rate,
        clamped,
        approximation_warning: det.dark_dead_time_warning(),
    }
}

/// Asymptotic photon-click rate for `mu -> inf` before the `p_no_dc` factor:
/// `f / (Int(fD) + 1)`.
pub fn saturation_rate(det: &DetectorParams, repetition_frequency: f64) -> f64 {
    repetition_frequency / (dead_time_ladder(repetition_frequency, det.dead_time) + 1) as f64
}

/// True when `f D` sits within relative `epsilon` of a positive integer,
/// where the ladder jumps and the response is ill-defined.
pub fn is_discontinuity(repetition_frequency: f64, dead_time: f64, epsilon: f64) -> bool {
    let fd = repetition_frequency * dead_time;
    let nearest = fd.round();
    nearest >= 1.0 && (fd - nearest).abs() <= epsilon * fd
}
