//! Post-processing of two-channel time-tag streams: delay compensation,
//! software gate filtering and counter-mode rate statistics.
//!
//! A click is *gated* when it falls inside the window belonging to the
//! nearest trigger at or before it (one-sided: `[t_trig, t_trig + w]`) or,
//! with the symmetric option, to the nearest trigger on either side
//! (`|t_click - t_trig| <= w / 2`).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timetag::{ps_to_seconds, seconds_to_ps, TimeTagStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateWindow {
    #[default]
    OneSided,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    /// Seconds.
    pub gate_width: f64,
    /// Signed shift applied to channel 1 before matching, seconds.
    pub channel_delay: f64,
    /// Counter-mode window length, seconds.
    pub integration_time: f64,
    pub repeats: usize,
    pub window: GateWindow,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            gate_width: 3e-9,
            channel_delay: 0.0,
            integration_time: 1.0,
            repeats: 100,
            window: GateWindow::OneSided,
        }
    }
}

impl GateConfig {
    /// One-sided gate pulled back by half its width, so it straddles the
    /// nominal photon arrival time. This is the delay compensation a
    /// simulated stream needs, since its triggers coincide with the pulses.
    pub fn centered() -> Self {
        let d = GateConfig::default();
        GateConfig {
            channel_delay: -d.gate_width / 2.0,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gate_width.is_finite() && self.gate_width > 0.0) {
            return Err(Error::invalid("gate_width", format!("{} s must be > 0", self.gate_width)));
        }
        if !self.channel_delay.is_finite() {
            return Err(Error::invalid("channel_delay", "must be finite"));
        }
        if !(self.integration_time.is_finite() && self.integration_time > 0.0) {
            return Err(Error::invalid(
                "integration_time",
                format!("{} s must be > 0", self.integration_time),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats", "must be at least 1"));
        }
        Ok(())
    }

    /// Checks that also need the source and detector: the gate must be much
    /// shorter than the pulse period and longer than the timing jitter.
    pub fn validate_for(&self, repetition_frequency: f64, jitter_sigma: f64) -> Result<()> {
        self.validate()?;
        if self.gate_width >= 1.0 / repetition_frequency {
            return Err(Error::invalid(
                "gate_width",
                format!("{} s is not below the pulse period 1/f", self.gate_width),
            ));
        }
        if self.gate_width <= jitter_sigma {
            return Err(Error::invalid(
                "gate_width",
                format!("{} s does not exceed the timing jitter {jitter_sigma} s", self.gate_width),
            ));
        }
        Ok(())
    }

    pub fn gate_width_ps(&self) -> i64 {
        seconds_to_ps(self.gate_width)
    }
}

/// Shift every channel-1 timestamp by `delay` seconds.
pub fn apply_delay(stream: &TimeTagStream, delay: f64) -> Result<TimeTagStream> {
    if !delay.is_finite() {
        return Err(Error::invalid("channel_delay", "must be finite"));
    }
    let shift = seconds_to_ps(delay);
    if shift == 0 {
        return Ok(stream.clone());
    }
    let shifted = stream
        .triggers()
        .iter()
        .map(|&t| {
            t.checked_add(shift).ok_or(Error::TimestampOverflow {
                timestamp_ps: t,
                shift_ps: shift,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(stream.with_triggers(shifted))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateSplit {
    pub gated: TimeTagStream,
    pub ungated: TimeTagStream,
    /// `true` for each channel-2 tag of the input that was gated.
    pub mask: Vec<bool>,
}

/// Classify channel-2 tags as gated or ungated against the (delay
/// compensated) trigger channel.
pub fn gate_filter(stream: &TimeTagStream, cfg: &GateConfig) -> Result<GateSplit> {
    cfg.validate()?;
    if stream.triggers().is_empty() {
        return Err(Error::MissingTriggerChannel);
    }
    let shifted = apply_delay(stream, cfg.channel_delay)?;
    let triggers = shifted.triggers();
    let w = cfg.gate_width_ps();

    let mut mask = Vec::with_capacity(stream.clicks().len());
    let mut gated = Vec::new();
    let mut ungated = Vec::new();
    // index of the first trigger strictly after the current click
    let mut next = 0usize;
    for &c in stream.clicks() {
        while next < triggers.len() && triggers[next] <= c {
            next += 1;
        }
        let before = next.checked_sub(1).map(|i| c - triggers[i]);
        let hit = match cfg.window {
            GateWindow::OneSided => before.is_some_and(|d| d <= w),
            GateWindow::Symmetric => {
                let after = triggers.get(next).map(|&t| t - c);
                before.is_some_and(|d| 2 * d <= w) || after.is_some_and(|d| 2 * d <= w)
            }
        };
        mask.push(hit);
        if hit {
            gated.push(c);
        } else {
            ungated.push(c);
        }
    }
    Ok(GateSplit {
        gated: stream.click_only(gated),
        ungated: stream.click_only(ungated),
        mask,
    })
}

/// Counts of sorted `times` in `windows` consecutive windows of `width_ps`
/// starting at `start_ps`. Tags outside the windows are ignored.
pub fn window_counts(times: &[i64], start_ps: i64, width_ps: i64, windows: usize) -> Vec<u64> {
    let mut counts = vec![0u64; windows];
    let end = start_ps as i128 + width_ps as i128 * windows as i128;
    for &t in times {
        let t = t as i128;
        if t < start_ps as i128 || t >= end {
            continue;
        }
        counts[((t - start_ps as i128) / width_ps as i128) as usize] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterResult {
    /// Counts per second.
    pub rate_mean: f64,
    /// Sample standard deviation of the per-window rates.
    pub rate_std: f64,
    pub per_window_counts: Vec<u64>,
    pub windows: usize,
}

impl CounterResult {
    pub fn from_counts(per_window_counts: Vec<u64>, integration_time: f64) -> Self {
        let n = per_window_counts.len();
        let rates = per_window_counts.iter().map(|&c| c as f64 / integration_time);
        let mean = rates.clone().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (rates.map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        CounterResult {
            rate_mean: if n == 0 { 0.0 } else { mean },
            rate_std: std,
            per_window_counts,
            windows: n,
        }
    }

    /// Standard error of `rate_mean`.
    pub fn standard_error(&self) -> f64 {
        if self.windows == 0 {
            return 0.0;
        }
        self.rate_std / (self.windows as f64).sqrt()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["window_index", "count"])?;
        for (i, c) in self.per_window_counts.iter().enumerate() {
            out.write_record([i.to_string(), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterReport {
    pub total: CounterResult,
    pub gated: CounterResult,
    pub dark_inferred: CounterResult,
    pub config: GateConfig,
}

impl CounterReport {
    /// Means, standard deviations and the gate configuration, without the
    /// per-window series.
    pub fn summary(&self) -> serde_json::Value {
        let brief = |r: &CounterResult| {
            serde_json::json!({
                "rate_mean": r.rate_mean,
                "rate_std": r.rate_std,
                "standard_error": r.standard_error(),
                "windows": r.windows,
            })
        };
        serde_json::json!({
            "n_click": brief(&self.total),
            "n_click_gated": brief(&self.gated),
            "n_dark_inferred": brief(&self.dark_inferred),
            "config": self.config,
        })
    }
}

/// Counter-mode measurement: `repeats` windows of `integration_time`
/// aligned to the stream start. Any tail beyond the last full window is
/// ignored.
pub fn counter_mode(stream: &TimeTagStream, cfg: &GateConfig) -> Result<CounterReport> {
    cfg.validate()?;
    let width = seconds_to_ps(cfg.integration_time);
    let needed = width as i128 * cfg.repeats as i128;
    let available = stream.duration_ps();
    if (available as i128) < needed {
        return Err(Error::InsufficientDuration {
            needed_s: cfg.integration_time * cfg.repeats as f64,
            available_s: ps_to_seconds(available),
        });
    }
    let start = stream.header.start_ps;
    let split = gate_filter(stream, cfg)?;
    let total = window_counts(stream.clicks(), start, width, cfg.repeats);
    let gated = window_counts(split.gated.clicks(), start, width, cfg.repeats);
    let dark: Vec<u64> = total.iter().zip(&gated).map(|(t, g)| t - g).collect();
    Ok(CounterReport {
        total: CounterResult::from_counts(total, cfg.integration_time),
        gated: CounterResult::from_counts(gated, cfg.integration_time),
        dark_inferred: CounterResult::from_counts(dark, cfg.integration_time),
        config: *cfg,
    })
}
