//! Mean photon number per pulse from a traceable optical power measurement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant, J s (exact SI value).
pub const PLANCK_CONSTANT: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reference-diode power reading and the attenuator chain in front of the SPAD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCalibration {
    /// Wavelength, metres.
    pub wavelength: f64,
    /// Reference-diode photocurrent at zero attenuation, amperes.
    pub photocurrent: f64,
    pub attenuation_1: f64,
    pub attenuation_2: f64,
    /// Linearity correction of the reference-diode responsivity.
    pub linearity_correction: f64,
    /// Reference-diode responsivity, A/W.
    pub responsivity: f64,
}

impl PowerCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::invalid("wavelength", format!("{} m must be > 0", self.wavelength)));
        }
        if !(self.photocurrent.is_finite() && self.photocurrent >= 0.0) {
            return Err(Error::invalid(
                "photocurrent",
                format!("{} A must be >= 0", self.photocurrent),
            ));
        }
        if !(self.responsivity.is_finite() && self.responsivity > 0.0) {
            return Err(Error::invalid(
                "responsivity",
                format!("{} A/W must be > 0", self.responsivity),
            ));
        }
        for (name, k) in [("attenuation_1", self.attenuation_1), ("attenuation_2", self.attenuation_2)] {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::invalid(name, format!("{k} not in (0, 1]")));
            }
        }
        if !self.linearity_correction.is_finite() || self.linearity_correction <= -1.0 {
            return Err(Error::invalid(
                "linearity_correction",
                format!("{} must be finite and > -1", self.linearity_correction),
            ));
        }
        Ok(())
    }

    /// Optical power reaching the detector, watts.
    pub fn attenuated_power(&self) -> f64 {
        self.photocurrent * self.attenuation_1 * self.attenuation_2 * (1.0 + self.linearity_correction)
            / self.responsivity
    }
}

/// `mu = lambda I0 k1 k2 (1 + c_lin) / (h c f s)`.
pub fn mean_photon_number(cal: &PowerCalibration, repetition_frequency: f64) -> Result<f64> {
    if !(repetition_frequency.is_finite() && repetition_frequency > 0.0) {
        return Err(Error::invalid(
            "repetition_frequency",
            format!("{repetition_frequency} Hz must be > 0"),
        ));
    }
    cal.validate()?;
    Ok(cal.wavelength * cal.photocurrent * cal.attenuation_1 * cal.attenuation_2
        * (1.0 + cal.linearity_correction)
        / (PLANCK_CONSTANT * SPEED_OF_LIGHT * repetition_frequency * cal.responsivity))
}
