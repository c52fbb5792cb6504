//! Count-rate model, event-level simulator and time-tag post-processing for
//! a free-running single-photon avalanche diode with non-extended dead time
//! and dark counts, detecting attenuated laser pulses.
//!
//! Units are SI throughout (seconds, hertz, counts per second) except for
//! time tags, which are integer picoseconds.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fitting;
pub mod gating;
pub mod model;
pub mod montecarlo;
pub mod sweep;
pub mod timetag;

pub use error::{Error, Result};
pub use model::{DarkModel, DetectorParams, RateBreakdown, SourceParams};
