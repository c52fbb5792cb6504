//! Event-level simulation of a free-running SPAD behind a pulsed laser.
//!
//! Each laser pulse at `k / f` becomes a photon candidate with probability
//! `q = 1 - exp(-eta mu)`, displaced by Gaussian timing jitter. Dark-count
//! candidates form a homogeneous Poisson process. Both candidate streams are
//! merged in time order and passed through a non-extended dead-time gate: a
//! candidate clicks iff it arrives at least `D` after the previous click, and
//! discarded candidates do not restart the dead time.
//!
//! All event times are integer picoseconds. Randomness comes from ChaCha8
//! with one independent stream per source (pulse trials, jitter, dark
//! counts), so changing `mu` leaves the dark-count arrivals untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{detection_probability, DetectorParams, SourceParams};
use crate::timetag::{StreamHeader, TimeTagStream, PS_PER_S};

pub const RNG_ALGORITHM: &str =
    "ChaCha8 (rand_chacha 0.9); streams pulse=0 jitter=1 dark=2; Normal/Exp ziggurat (rand_distr 0.5)";

const PULSE_STREAM: u64 = 0;
const JITTER_STREAM: u64 = 1;
const DARK_STREAM: u64 = 2;

/// How the detector's `dark_rate` maps onto the simulated dark process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarkCountConvention {
    /// `dark_rate` is what the detector reports with the light blocked,
    /// i.e. already thinned by its own dead time. The simulated intrinsic
    /// rate is `N / (1 - N D)`.
    #[default]
    Measured,
    /// `dark_rate` is the rate of the underlying Poisson process.
    Intrinsic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub detector: DetectorParams,
    pub source: SourceParams,
    /// Acquisition length, seconds.
    pub duration_s: f64,
    pub rng_seed: u64,
    pub emit_trigger_channel: bool,
    #[serde(default)]
    pub dark_convention: DarkCountConvention,
}

impl SimulationConfig {
    pub fn new(detector: DetectorParams, source: SourceParams, duration_s: f64, rng_seed: u64) -> Self {
        SimulationConfig {
            detector,
            source,
            duration_s,
            rng_seed,
            emit_trigger_channel: true,
            dark_convention: DarkCountConvention::Measured,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.duration_s;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::invalid("duration", format!("{t} s must be > 0")));
        }
        if t * PS_PER_S >= i64::MAX as f64 / 2.0 {
            return Err(Error::invalid("duration", format!("{t} s overflows the picosecond clock")));
        }
        let pulses = self.source.repetition_frequency() * t;
        if pulses >= u64::MAX as f64 {
            return Err(Error::invalid("duration", "pulse count does not fit in 64 bits"));
        }
        if !self.source.mean_photon_number().is_finite() {
            return Err(Error::invalid("mean_photon_number", "must be finite to simulate"));
        }
        let period = 1.0 / self.source.repetition_frequency();
        if 10.0 * self.detector.timing_jitter_sigma() >= period {
            return Err(Error::invalid(
                "timing_jitter_sigma",
                "jitter must stay well below the pulse period (10 sigma < 1/f)",
            ));
        }
        self.simulated_dark_rate().map(|_| ())
    }

    /// Number of laser pulses in `[0, T)`.
    pub fn pulse_count(&self) -> u64 {
        let n = self.source.repetition_frequency() * self.duration_s;
        let nearest = n.round();
        // f T lands a hair below an integer more often than not
        if (n - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as u64
        } else {
            n.floor() as u64
        }
    }

    pub fn duration_ps(&self) -> i64 {
        (self.duration_s * PS_PER_S).round() as i64
    }

    /// Rate of the Poisson dark process actually fed to the gate.
    pub fn simulated_dark_rate(&self) -> Result<f64> {
        let n = self.detector.dark_rate();
        match self.dark_convention {
            DarkCountConvention::Intrinsic => Ok(n),
            DarkCountConvention::Measured => {
                let nd = n * self.detector.dead_time();
                if nd >= 1.0 {
                    return Err(Error::invalid(
                        "dark_rate",
                        format!("measured dark rate times dead time is {nd}; a dead-time-limited detector cannot report that"),
                    ));
                }
                Ok(n / (1.0 - nd))
            }
        }
    }
}

/// Timestamp of laser pulse `k`, ps.
pub fn pulse_time_ps(k: u64, repetition_frequency: f64) -> i64 {
    (k as f64 * (PS_PER_S / repetition_frequency)).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Photon,
    Dark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub time_ps: i64,
    pub kind: EventKind,
}

/// Ground-truth bookkeeping of what the dead-time gate did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventKindTally {
    pub photon_clicks: u64,
    pub dark_clicks: u64,
    pub photons_lost_to_dead_time: u64,
    pub dark_lost_to_dead_time: u64,
}

impl EventKindTally {
    /// Pulses whose detection trial succeeded.
    pub fn photon_candidates(&self) -> u64 {
        self.photon_clicks + self.photons_lost_to_dead_time
    }

    pub fn dark_candidates(&self) -> u64 {
        self.dark_clicks + self.dark_lost_to_dead_time
    }

    pub fn clicks(&self) -> u64 {
        self.photon_clicks + self.dark_clicks
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct PhotonCandidates {
    rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    q: f64,
    frequency: f64,
    next_pulse: u64,
    pulses: u64,
}

impl Iterator for PhotonCandidates {
    type Item = Candidate;

    fn next(&mut self) -> Option<Candidate> {
        while self.next_pulse < self.pulses {
            let k = self.next_pulse;
            self.next_pulse += 1;
            // one uniform draw per pulse, whatever q is
            let u: f64 = self.rng.random();
            if u < self.q {
                let mut t = pulse_time_ps(k, self.frequency);
                if let Some(normal) = &self.jitter {
                    t += normal.sample(&mut self.jitter_rng).round() as i64;
                }
                return Some(Candidate {
                    time_ps: t,
                    kind: EventKind::Photon,
                });
            }
        }
        None
    }
}

struct DarkCandidates {
    rng: ChaCha8Rng,
    gap: Option<Exp<f64>>,
    now_ps: i64,
    end_ps: i64,
}

impl Iterator for DarkCandidates {
    type Item = Candidate;

    fn next(&mut self) -> Option<Candidate> {
        let gap = self.gap.as_ref()?;
        self.now_ps = self.now_ps.saturating_add(gap.sample(&mut self.rng).round() as i64);
        if self.now_ps >= self.end_ps {
            self.gap = None;
            return None;
        }
        Some(Candidate {
            time_ps: self.now_ps,
            kind: EventKind::Dark,
        })
    }
}

/// Time-ordered, labelled photon and dark candidates for one run.
pub struct CandidateEvents {
    photons: std::iter::Peekable<PhotonCandidates>,
    darks: std::iter::Peekable<DarkCandidates>,
}

impl Iterator for CandidateEvents {
    type Item = Candidate;

    fn next(&mut self) -> Option<Candidate> {
        match (self.photons.peek(), self.darks.peek()) {
            (None, None) => None,
            (Some(_), None) => self.photons.next(),
            (None, Some(_)) => self.darks.next(),
            // photon wins ties
            (Some(p), Some(d)) if p.time_ps <= d.time_ps => self.photons.next(),
            _ => self.darks.next(),
        }
    }
}

pub fn generate_candidate_events(cfg: &SimulationConfig) -> Result<CandidateEvents> {
    cfg.validate()?;
    let q = detection_probability(&cfg.detector, &cfg.source);
    let sigma_ps = cfg.detector.timing_jitter_sigma() * PS_PER_S;
    let jitter = if sigma_ps > 0.0 {
        Some(Normal::new(0.0, sigma_ps).map_err(|e| Error::invalid("timing_jitter_sigma", e.to_string()))?)
    } else {
        None
    };
    let photons = PhotonCandidates {
        rng: rng_for(cfg.rng_seed, PULSE_STREAM),
        jitter_rng: rng_for(cfg.rng_seed, JITTER_STREAM),
        jitter,
        q,
        frequency: cfg.source.repetition_frequency(),
        next_pulse: 0,
        pulses: cfg.pulse_count(),
    };

    let dark_rate = cfg.simulated_dark_rate()?;
    let gap = if dark_rate > 0.0 {
        Some(Exp::new(dark_rate / PS_PER_S).map_err(|e| Error::invalid("dark_rate", e.to_string()))?)
    } else {
        None
    };
    let darks = DarkCandidates {
        rng: rng_for(cfg.rng_seed, DARK_STREAM),
        gap,
        now_ps: 0,
        end_ps: cfg.duration_ps(),
    };

    Ok(CandidateEvents {
        photons: photons.peekable(),
        darks: darks.peekable(),
    })
}

/// Stateful non-extended dead-time gate.
#[derive(Debug, Clone)]
pub struct DeadTimeGate {
    dead_time_ps: i64,
    last_click: Option<i64>,
    last_seen: Option<i64>,
    seen: usize,
    tally: EventKindTally,
}

impl DeadTimeGate {
    pub fn new(dead_time_ps: i64) -> Self {
        DeadTimeGate {
            dead_time_ps,
            last_click: None,
            last_seen: None,
            seen: 0,
            tally: EventKindTally::default(),
        }
    }

    /// Feed the next candidate; returns whether it produced a click.
    pub fn offer(&mut self, c: Candidate) -> Result<bool> {
        if let Some(prev) = self.last_seen {
            if c.time_ps < prev {
                return Err(Error::UnsortedInput {
                    index: self.seen,
                    previous_ps: prev,
                    time_ps: c.time_ps,
                });
            }
        }
        self.last_seen = Some(c.time_ps);
        self.seen += 1;

        let alive = self
            .last_click
            .is_none_or(|last| c.time_ps - last >= self.dead_time_ps);
        match (alive, c.kind) {
            (true, EventKind::Photon) => self.tally.photon_clicks += 1,
            (true, EventKind::Dark) => self.tally.dark_clicks += 1,
            (false, EventKind::Photon) => self.tally.photons_lost_to_dead_time += 1,
            (false, EventKind::Dark) => self.tally.dark_lost_to_dead_time += 1,
        }
        if alive {
            self.last_click = Some(c.time_ps);
        }
        Ok(alive)
    }

    pub fn tally(&self) -> EventKindTally {
        self.tally
    }
}

/// Clicks surviving the dead-time gate, with their ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadTimeOutput {
    pub clicks: Vec<i64>,
    pub labels: Vec<EventKind>,
    pub tally: EventKindTally,
}

pub fn apply_dead_time<I>(candidates: I, dead_time: f64) -> Result<DeadTimeOutput>
where
    I: IntoIterator<Item = Candidate>,
{
    if !(dead_time.is_finite() && dead_time > 0.0) {
        return Err(Error::invalid("dead_time", format!("{dead_time} s must be > 0")));
    }
    let mut gate = DeadTimeGate::new((dead_time * PS_PER_S).round() as i64);
    let mut clicks = Vec::new();
    let mut labels = Vec::new();
    for c in candidates {
        if gate.offer(c)? {
            clicks.push(c.time_ps);
            labels.push(c.kind);
        }
    }
    Ok(DeadTimeOutput {
        clicks,
        labels,
        tally: gate.tally(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub stream: TimeTagStream,
    /// Ground truth for each channel-2 tag, in stream order.
    pub labels: Vec<EventKind>,
    pub tally: EventKindTally,
    pub pulses: u64,
}

impl SimulationOutput {
    pub fn click_rate(&self) -> f64 {
        self.stream.clicks().len() as f64 / crate::timetag::ps_to_seconds(self.stream.duration_ps())
    }
}

pub fn stream_header(cfg: &SimulationConfig) -> Result<StreamHeader> {
    Ok(StreamHeader {
        start_ps: 0,
        duration_ps: Some(cfg.duration_ps()),
        rng_seed: Some(cfg.rng_seed),
        rng_algorithm: Some(RNG_ALGORITHM.to_string()),
        config: Some(serde_json::to_value(cfg)?),
    })
}

/// Run the full chain: candidates, dead-time gate, and optionally the
/// trigger channel. Deterministic in `cfg.rng_seed`.
pub fn simulate(cfg: &SimulationConfig) -> Result<SimulationOutput> {
    let candidates = generate_candidate_events(cfg)?;
    let gated = apply_dead_time(candidates, cfg.detector.dead_time_ps() as f64 / PS_PER_S)?;
    let pulses = cfg.pulse_count();
    let triggers = if cfg.emit_trigger_channel {
        let f = cfg.source.repetition_frequency();
        (0..pulses).map(|k| pulse_time_ps(k, f)).collect()
    } else {
        Vec::new()
    };
    let stream = TimeTagStream::from_channels(stream_header(cfg)?, triggers, gated.clicks)?;
    Ok(SimulationOutput {
        stream,
        labels: gated.labels,
        tally: gated.tally,
        pulses,
    })
}
