use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("candidate stream not time-ordered at index {index}: {time_ps} ps follows {previous_ps} ps")]
    UnsortedInput {
        index: usize,
        previous_ps: i64,
        time_ps: i64,
    },

    #[error("channel {channel} not time-ordered at record {index}")]
    UnsortedChannel { channel: u8, index: usize },

    #[error("timestamp overflow shifting {timestamp_ps} ps by {shift_ps} ps")]
    TimestampOverflow { timestamp_ps: i64, shift_ps: i64 },

    #[error("stream has no trigger (channel 1) records")]
    MissingTriggerChannel,

    #[error("stream covers {available_s} s but {needed_s} s are required")]
    InsufficientDuration { needed_s: f64, available_s: f64 },

    #[error("time-tag format: {0}")]
    Format(String),

    #[error("unknown channel {channel} at record {index}")]
    UnknownChannel { channel: u8, index: usize },

    #[error("csv row {row}: {message}")]
    CsvRow { row: usize, message: String },

    #[error("missing column `{column}`")]
    MissingColumn { column: String },

    #[error("unit mismatch: expected column `{expected}`, found `{found}`")]
    UnitMismatch { expected: String, found: String },

    #[error("duplicate swept values {values:?} at rows {rows:?}")]
    DuplicateSweptValue { values: Vec<f64>, rows: Vec<usize> },

    #[error("measurement at row {row} (swept value {value}) matches no grid point")]
    UnmatchedGridPoint { row: usize, value: f64 },

    #[error("sweep result has no reference dark-rate column")]
    MissingReference,

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("fit did not converge after {iterations} iterations (best objective {objective} at {best:?})")]
    NonConvergence {
        iterations: usize,
        objective: f64,
        /// Best-so-far `[efficiency, dead_time, dark_rate]`.
        best: [f64; 3],
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
