//! Parameter sweeps over mean photon number or repetition frequency,
//! evaluated in closed form and/or by Monte Carlo, plus the dark-count model
//! comparison and ingestion of measured reference data.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{counter_mode, GateConfig};
use crate::model::{
    is_discontinuity, total_click_rate, DarkModel, DetectorParams, SourceParams,
};
use crate::montecarlo::{simulate, DarkCountConvention, SimulationConfig, RNG_ALGORITHM};

/// Relative tolerance on `f D` for flagging a point as sitting on a jump.
pub const DISCONTINUITY_EPSILON: f64 = 1e-9;
/// Relative tolerance when matching ingested swept values to the grid.
pub const MATCH_TOLERANCE: f64 = 1e-6;
pub const MANIFEST_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 10] = [
    "swept_value",
    "n_click_model",
    "n_click_mc",
    "n_click_mc_std",
    "n_click_gated_mc",
    "n_dark_model_a",
    "n_dark_model_b",
    "n_dark_model_c",
    "n_dark_mc",
    "discontinuity_flag",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SweepMode {
    /// Vary `mu` at a fixed repetition frequency (Hz).
    SweepMu { frequency: f64 },
    /// Vary the repetition frequency (Hz) at a fixed `mu`.
    SweepF { mu: f64 },
}

impl SweepMode {
    pub fn swept_name(&self) -> &'static str {
        match self {
            SweepMode::SweepMu { .. } => "mu",
            SweepMode::SweepF { .. } => "f_hz",
        }
    }

    /// `(f, mu)` at swept value `x`.
    pub fn point(&self, x: f64) -> (f64, f64) {
        match *self {
            SweepMode::SweepMu { frequency } => (frequency, x),
            SweepMode::SweepF { mu } => (x, mu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    #[serde(flatten)]
    pub mode: SweepMode,
    pub grid: Vec<f64>,
    pub engines: Vec<Engine>,
    pub dark_models: Vec<DarkModel>,
    /// Monte Carlo acquisition per point, seconds.
    pub duration_s: f64,
    /// Point `i` is simulated with seed `base_seed + i`.
    pub base_seed: u64,
    pub gate: GateConfig,
    #[serde(default)]
    pub dark_convention: DarkCountConvention,
    /// Set when the grid is a reconstruction rather than measured values.
    #[serde(default)]
    pub grid_reconstructed: bool,
}

/// 31 log-spaced values over `[0.01, 23]`.
pub fn default_mu_grid() -> Vec<f64> {
    log_grid(0.01, 23.0, 31)
}

/// 10 kHz to 170 kHz in 1 kHz steps, in Hz.
pub fn default_frequency_grid() -> Vec<f64> {
    (10..=170).map(|k| k as f64 * 1e3).collect()
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    _ if i == n - 1 => hi,
                    _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

impl SweepPlan {
    /// Both engines, all dark models, default grid for the mode, 100 s per
    /// Monte Carlo point and a centred 3 ns gate.
    pub fn new(mode: SweepMode) -> Self {
        let grid = match mode {
            SweepMode::SweepMu { .. } => default_mu_grid(),
            SweepMode::SweepF { .. } => default_frequency_grid(),
        };
        SweepPlan {
            mode,
            grid,
            engines: vec![Engine::ClosedForm, Engine::MonteCarlo],
            dark_models: DarkModel::ALL.to_vec(),
            duration_s: 100.0,
            base_seed: 0,
            gate: GateConfig::centered(),
            dark_convention: DarkCountConvention::Measured,
            grid_reconstructed: true,
        }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self.grid_reconstructed = false;
        self
    }

    pub fn closed_form_only(mut self) -> Self {
        self.engines = vec![Engine::ClosedForm];
        self
    }

    pub fn uses(&self, engine: Engine) -> bool {
        self.engines.contains(&engine)
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SweepMode::SweepMu { frequency } => {
                SourceParams::new(frequency, 0.0)?;
            }
            SweepMode::SweepF { mu } => {
                SourceParams::new(1.0, mu)?;
            }
        }
        if self.grid.is_empty() {
            return Err(Error::invalid("grid", "must not be empty"));
        }
        if let Some(i) = self.grid.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "grid",
                format!("must be strictly increasing (index {})", i + 1),
            ));
        }
        if self.grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("grid", "values must be finite"));
        }
        if self.engines.is_empty() {
            return Err(Error::invalid("engines", "select at least one engine"));
        }
        if self.uses(Engine::MonteCarlo) {
            self.gate.validate()?;
            let needed = self.gate.integration_time * self.gate.repeats as f64;
            if !(self.duration_s >= needed) {
                return Err(Error::invalid(
                    "duration",
                    format!("{} s is shorter than {needed} s of counter windows", self.duration_s),
                ));
            }
            if (self.grid.len() as u64).checked_add(self.base_seed).is_none() {
                return Err(Error::invalid("seed", "base seed + grid index overflows"));
            }
        }
        Ok(())
    }

    pub fn seed_for(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub swept_value: f64,
    pub frequency: f64,
    pub mu: f64,
    pub seed: Option<u64>,
    pub n_click_model: Option<f64>,
    pub n_click_mc: Option<f64>,
    /// Standard error of the Monte Carlo mean over counter windows.
    pub n_click_mc_std: Option<f64>,
    pub n_click_gated_mc: Option<f64>,
    pub n_dark_model_a: Option<f64>,
    pub n_dark_model_b: Option<f64>,
    pub n_dark_model_c: Option<f64>,
    pub n_dark_mc: Option<f64>,
    pub n_dark_mc_std: Option<f64>,
    pub measured_n_click: Option<f64>,
    pub measured_n_dark: Option<f64>,
    pub discontinuity_flag: bool,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn dark_model(&self, model: DarkModel) -> Option<f64> {
        match model {
            DarkModel::A => self.n_dark_model_a,
            DarkModel::B => self.n_dark_model_b,
            DarkModel::C => self.n_dark_model_c,
        }
    }

    /// Measured dark rate if ingested, else the Monte Carlo gated complement.
    pub fn reference_dark(&self) -> Option<f64> {
        self.measured_n_dark.or(self.n_dark_mc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub plan: SweepPlan,
    pub detector: DetectorParams,
    pub rows: Vec<SweepRow>,
}

fn evaluate_point(plan: &SweepPlan, det: &DetectorParams, index: usize, x: f64) -> SweepRow {
    let (f, mu) = plan.mode.point(x);
    let mut row = SweepRow {
        swept_value: x,
        frequency: f,
        mu,
        discontinuity_flag: f.is_finite() && is_discontinuity(f, det.dead_time(), DISCONTINUITY_EPSILON),
        ..SweepRow::default()
    };
    if let Err(e) = fill_point(plan, det, index, &mut row) {
        row.error = Some(e.to_string());
    }
    row
}

fn fill_point(plan: &SweepPlan, det: &DetectorParams, index: usize, row: &mut SweepRow) -> Result<()> {
    let src = SourceParams::new(row.frequency, row.mu)?;
    if plan.uses(Engine::ClosedForm) {
        row.n_click_model = Some(total_click_rate(det, &src).total_rate);
    }
    for &m in &plan.dark_models {
        let v = Some(m.rate(det, &src));
        match m {
            DarkModel::A => row.n_dark_model_a = v,
            DarkModel::B => row.n_dark_model_b = v,
            DarkModel::C => row.n_dark_model_c = v,
        }
    }
    if plan.uses(Engine::MonteCarlo) {
        let seed = plan.seed_for(index);
        row.seed = Some(seed);
        let cfg = SimulationConfig {
            dark_convention: plan.dark_convention,
            ..SimulationConfig::new(*det, src, plan.duration_s, seed)
        };
        let out = simulate(&cfg)?;
        let counts = counter_mode(&out.stream, &plan.gate)?;
        row.n_click_mc = Some(counts.total.rate_mean);
        row.n_click_mc_std = Some(counts.total.standard_error());
        row.n_click_gated_mc = Some(counts.gated.rate_mean);
        row.n_dark_mc = Some(counts.dark_inferred.rate_mean);
        row.n_dark_mc_std = Some(counts.dark_inferred.standard_error());
    }
    Ok(())
}

/// Evaluate every grid point. A failing point keeps its row, with the error
/// recorded and the value columns left empty.
pub fn run_sweep(plan: &SweepPlan, det: &DetectorParams) -> Result<SweepResult> {
    plan.validate()?;
    let points: Vec<(usize, f64)> = plan.grid.iter().copied().enumerate().collect();

    #[cfg(feature = "parallel")]
    let rows = {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|&(i, x)| evaluate_point(plan, det, i, x))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows = points
        .iter()
        .map(|&(i, x)| evaluate_point(plan, det, i, x))
        .collect();

    Ok(SweepResult {
        plan: plan.clone(),
        detector: *det,
        rows,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            out.write_record([
                r.swept_value.to_string(),
                cell(r.n_click_model),
                cell(r.n_click_mc),
                cell(r.n_click_mc_std),
                cell(r.n_click_gated_mc),
                cell(r.n_dark_model_a),
                cell(r.n_dark_model_b),
                cell(r.n_dark_model_c),
                cell(r.n_dark_mc),
                u8::from(r.discontinuity_flag).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Everything needed to rerun the sweep and check it bit-for-bit.
    pub fn manifest(&self) -> serde_json::Value {
        let points: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                serde_json::json!({
                    "index": i,
                    "swept_value": r.swept_value,
                    "seed": r.seed,
                    "error": r.error,
                })
            })
            .collect();
        serde_json::json!({
            "manifest_version": MANIFEST_VERSION,
            "crate": env!("CARGO_PKG_NAME"),
            "crate_version": env!("CARGO_PKG_VERSION"),
            "rng_algorithm": RNG_ALGORITHM,
            "swept_quantity": self.plan.mode.swept_name(),
            "grid_reconstructed": self.plan.grid_reconstructed,
            "discontinuity_epsilon": DISCONTINUITY_EPSILON,
            "n_click_mc_std": "standard error of the mean over counter windows",
            "plan": self.plan,
            "detector": self.detector,
            "points": points,
        })
    }

    pub fn failed_points(&self) -> impl Iterator<Item = (usize, &SweepRow)> {
        self.rows.iter().enumerate().filter(|(_, r)| r.error.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub swept_value: f64,
    pub reference: f64,
    /// `|model - reference|` for A, B, C; `None` when the model was not run.
    pub residuals: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarkModelComparison {
    pub rows: Vec<ComparisonRow>,
    /// Root-mean-square residual for A, B, C.
    pub rms: [Option<f64>; 3],
}

impl DarkModelComparison {
    pub fn rms_of(&self, model: DarkModel) -> Option<f64> {
        self.rms[model as usize]
    }
}

/// Residuals of each dark-count model against the reference column.
pub fn compare_dark_models(result: &SweepResult) -> Result<DarkModelComparison> {
    let rows: Vec<ComparisonRow> = result
        .rows
        .iter()
        .filter_map(|r| {
            let reference = r.reference_dark()?;
            let residuals = DarkModel::ALL.map(|m| r.dark_model(m).map(|v| (v - reference).abs()));
            Some(ComparisonRow {
                swept_value: r.swept_value,
                reference,
                residuals,
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::MissingReference);
    }
    let rms = [0, 1, 2].map(|k| {
        let vals: Vec<f64> = rows.iter().filter_map(|r| r.residuals[k]).collect();
        (!vals.is_empty()).then(|| (vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64).sqrt())
    });
    Ok(DarkModelComparison { rows, rms })
}

struct Measurement {
    row: usize,
    value: f64,
    n_click: f64,
    n_dark: f64,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= MATCH_TOLERANCE * a.abs().max(b.abs()).max(1e-300)
}

/// Merge a measured CSV into `result` as the reference columns.
///
/// Columns: the swept quantity (`mu` for a mu sweep, `f_hz` or `f_khz` for
/// a frequency sweep), `n_click` and `n_dark`, in counts per second. Row
/// numbers in errors are file line numbers (the header is line 1).
pub fn ingest_measurements<R: Read>(result: &mut SweepResult, reader: R) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let (swept_col, scale) = match result.plan.mode {
        SweepMode::SweepMu { .. } => match find("mu") {
            Some(i) => (i, 1.0),
            None => {
                return Err(match ["f_hz", "f_khz"].into_iter().find(|c| find(c).is_some()) {
                    Some(found) => Error::UnitMismatch {
                        expected: "mu".into(),
                        found: found.into(),
                    },
                    None => Error::MissingColumn { column: "mu".into() },
                })
            }
        },
        SweepMode::SweepF { .. } => match (find("f_hz"), find("f_khz")) {
            (Some(i), _) => (i, 1.0),
            (None, Some(i)) => (i, 1e3),
            (None, None) => {
                return Err(match find("mu") {
                    Some(_) => Error::UnitMismatch {
                        expected: "f_hz or f_khz".into(),
                        found: "mu".into(),
                    },
                    None => Error::MissingColumn { column: "f_hz".into() },
                })
            }
        },
    };
    let click_col = find("n_click").ok_or_else(|| Error::MissingColumn { column: "n_click".into() })?;
    let dark_col = find("n_dark").ok_or_else(|| Error::MissingColumn { column: "n_dark".into() })?;

    let mut measured = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::CsvRow {
            row: line,
            message: e.to_string(),
        })?;
        let num = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::CsvRow {
                    row: line,
                    message: format!("`{name}` = {raw:?} is not a finite number"),
                })
        };
        measured.push(Measurement {
            row: line,
            value: num(swept_col, &headers[swept_col])? * scale,
            n_click: num(click_col, "n_click")?,
            n_dark: num(dark_col, "n_dark")?,
        });
    }

    let mut dup_values = Vec::new();
    let mut dup_rows = Vec::new();
    for (i, a) in measured.iter().enumerate() {
        for b in &measured[i + 1..] {
            if close(a.value, b.value) {
                dup_values.push(a.value);
                dup_rows.extend([a.row, b.row]);
            }
        }
    }
    if !dup_values.is_empty() {
        dup_rows.sort_unstable();
        dup_rows.dedup();
        return Err(Error::DuplicateSweptValue {
            values: dup_values,
            rows: dup_rows,
        });
    }

    let mut targets = Vec::with_capacity(measured.len());
    for m in &measured {
        let idx = result
            .rows
            .iter()
            .position(|r| close(r.swept_value, m.value))
            .ok_or(Error::UnmatchedGridPoint {
                row: m.row,
                value: m.value,
            })?;
        targets.push(idx);
    }
    for (m, idx) in measured.iter().zip(targets) {
        let r = &mut result.rows[idx];
        r.measured_n_click = Some(m.n_click);
        r.measured_n_dark = Some(m.n_dark);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det() -> DetectorParams {
        DetectorParams::reference_ingaas()
    }

    #[test]
    fn default_grids() {
        let mu = default_mu_grid();
        assert_eq!(mu.len(), 31);
        assert_eq!(mu[0], 0.01);
        assert_eq!(mu[30], 23.0);
        assert!(mu.windows(2).all(|w| w[1] > w[0]));
        let f = default_frequency_grid();
        assert_eq!(f.len(), 161);
        assert_eq!((f[0], f[160]), (10e3, 170e3));
    }

    #[test]
    fn plan_validation() {
        let ok = SweepPlan::new(SweepMode::SweepMu { frequency: 30e3 });
        ok.validate().unwrap();
        let unsorted = ok.clone().with_grid(vec![1.0, 0.5]);
        assert!(unsorted.validate().is_err());
        assert!(ok.clone().with_grid(vec![]).validate().is_err());
        let short = SweepPlan {
            duration_s: 10.0,
            ..ok.clone()
        };
        assert!(short.validate().is_err());
        assert!(short.closed_form_only().validate().is_ok());
        let bad_f = SweepPlan::new(SweepMode::SweepMu { frequency: -1.0 });
        assert!(bad_f.validate().is_err());
    }

    #[test]
    fn mu_sweep_saturates_toward_repetition_frequency() {
        let plan = SweepPlan::new(SweepMode::SweepMu { frequency: 30e3 })
            .closed_form_only()
            .with_grid(vec![0.01, 1.0, 10.0, 100.0, 1000.0]);
        let res = run_sweep(&plan, &det()).unwrap();
        let n: Vec<f64> = res.rows.iter().map(|r| r.n_click_model.unwrap()).collect();
        assert!(n.windows(2).all(|w| w[1] > w[0]));
        let limit = 30e3 * (-805.2f64 * 20.31e-6).exp() + 805.2 * (1.0 - 30e3 * 20.31e-6);
        assert!((n[4] - limit).abs() / limit < 1e-6, "{} vs {limit}", n[4]);
        assert!(res.rows.iter().all(|r| r.n_click_mc.is_none() && r.seed.is_none()));
    }

    #[test]
    fn frequency_sweep_jumps_at_inverse_dead_time() {
        let plan = SweepPlan::new(SweepMode::SweepF { mu: 20.5 }).closed_form_only();
        let res = run_sweep(&plan, &det()).unwrap();
        let at = |khz: usize| &res.rows[khz - 10];
        // 1/D = 49.24 kHz, 2/D = 98.47 kHz
        for (lo, hi) in [(49, 50), (98, 99)] {
            let dn = at(hi).n_click_model.unwrap() - at(lo).n_click_model.unwrap();
            let dd = at(hi).n_dark_model_a.unwrap() - at(lo).n_dark_model_a.unwrap();
            assert!(dn < 0.0 && dd > 0.0, "{lo}->{hi}: {dn} {dd}");
        }
        // rising between the jumps
        for k in 50..98 {
            assert!(at(k + 1).n_click_model > at(k).n_click_model);
        }
    }

    #[test]
    fn low_mu_frequency_sweep_is_nearly_linear() {
        let plan = SweepPlan::new(SweepMode::SweepF { mu: 0.19 }).closed_form_only();
        let res = run_sweep(&plan, &det()).unwrap();
        let n: Vec<f64> = res.rows.iter().map(|r| r.n_click_model.unwrap()).collect();
        let (first, last) = (n[0], n[n.len() - 1]);
        let span = last - first;
        let biggest_drop = n.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        assert!(biggest_drop < 0.02 * span, "{biggest_drop}");
        // distance from the chord through the end points
        let worst = n
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (first + span * i as f64 / (n.len() - 1) as f64)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.03 * span, "{worst}");
    }

    #[test]
    fn discontinuity_flag_on_exact_multiples() {
        let d = det().dead_time();
        let plan = SweepPlan::new(SweepMode::SweepF { mu: 1.0 })
            .closed_form_only()
            .with_grid(vec![40e3, 1.0 / d, 60e3, 2.0 / d]);
        let res = run_sweep(&plan, &det()).unwrap();
        let flags: Vec<bool> = res.rows.iter().map(|r| r.discontinuity_flag).collect();
        assert_eq!(flags, vec![false, true, false, true]);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&CSV_COLUMNS.join(",")));
        assert!(text.lines().nth(1).unwrap().ends_with(",0"));
        assert!(text.lines().nth(2).unwrap().ends_with(",1"));
    }

    #[test]
    fn failing_point_does_not_stop_the_sweep() {
        // f = 0 is an invalid source; the neighbours still evaluate
        let plan = SweepPlan::new(SweepMode::SweepF { mu: 1.0 })
            .closed_form_only()
            .with_grid(vec![-1.0, 0.0, 30e3]);
        let res = run_sweep(&plan, &det()).unwrap();
        assert_eq!(res.rows.len(), 3);
        assert!(res.rows[0].error.is_some() && res.rows[1].error.is_some());
        assert!(res.rows[2].error.is_none());
        assert_eq!(res.failed_points().count(), 2);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap().lines().nth(1).unwrap().to_string();
        assert_eq!(line, "-1,,,,,,,,,0");
    }

    #[test]
    fn monte_carlo_rows_carry_seed_and_statistics() {
        let plan = SweepPlan {
            duration_s: 10.0,
            base_seed: 100,
            gate: GateConfig {
                repeats: 10,
                ..GateConfig::centered()
            },
            ..SweepPlan::new(SweepMode::SweepMu { frequency: 30e3 }).with_grid(vec![0.5, 2.0])
        };
        let res = run_sweep(&plan, &det()).unwrap();
        for (i, r) in res.rows.iter().enumerate() {
            assert_eq!(r.seed, Some(100 + i as u64));
            let (n, s, g) = (r.n_click_mc.unwrap(), r.n_click_mc_std.unwrap(), r.n_click_gated_mc.unwrap());
            assert!(s > 0.0 && g < n);
            assert!((r.n_dark_mc.unwrap() - (n - g)).abs() < 1e-9);
        }
        let again = run_sweep(&plan, &det()).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn zero_dark_rate_comparison_has_zero_residuals() {
        let d = DetectorParams::new(0.1, 20.31e-6, 0.0).unwrap();
        let plan = SweepPlan {
            duration_s: 5.0,
            gate: GateConfig {
                repeats: 5,
                ..GateConfig::centered()
            },
            ..SweepPlan::new(SweepMode::SweepMu { frequency: 30e3 }).with_grid(vec![0.1, 1.0])
        };
        let res = run_sweep(&plan, &d).unwrap();
        let cmp = compare_dark_models(&res).unwrap();
        for m in DarkModel::ALL {
            assert_eq!(cmp.rms_of(m), Some(0.0));
        }
    }

    #[test]
    fn comparison_needs_a_reference() {
        let plan = SweepPlan::new(SweepMode::SweepMu { frequency: 30e3 }).closed_form_only();
        let res = run_sweep(&plan, &det()).unwrap();
        assert!(matches!(compare_dark_models(&res), Err(Error::MissingReference)));
    }

    fn small_mu_result() -> SweepResult {
        let plan = SweepPlan::new(SweepMode::SweepMu { frequency: 30e3 })
            .closed_form_only()
            .with_grid(vec![0.19, 1.5, 20.5]);
        run_sweep(&plan, &det()).unwrap()
    }

    #[test]
    fn ingest_well_formed_measurements() {
        let mut res = small_mu_result();
        let csv = "mu,n_click,n_dark\n0.19,1300,800\n20.5,20000,300\n";
        ingest_measurements(&mut res, csv.as_bytes()).unwrap();
        assert_eq!(res.rows[0].measured_n_dark, Some(800.0));
        assert_eq!(res.rows[1].measured_n_dark, None);
        assert_eq!(res.rows[2].measured_n_click, Some(20000.0));
        let cmp = compare_dark_models(&res).unwrap();
        assert_eq!(cmp.rows.len(), 2);
        let c = cmp.rows[1].residuals[2].unwrap();
        assert!((c - 505.2).abs() < 1e-9, "{c}");
    }

    #[test]
    fn ingest_reports_schema_problems() {
        let mut res = small_mu_result();
        let err = ingest_measurements(&mut res, "mu,n_click\n0.19,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column } if column == "n_dark"), "{err}");

        let err = ingest_measurements(&mut res, "f_khz,n_click,n_dark\n30,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::UnitMismatch { .. }), "{err}");

        let csv = "mu,n_click,n_dark\n0.19,1,1\n1.5,2,2\n0.19,3,3\n";
        match ingest_measurements(&mut res, csv.as_bytes()).unwrap_err() {
            Error::DuplicateSweptValue { values, rows } => {
                assert_eq!(values, vec![0.19]);
                assert_eq!(rows, vec![2, 4]);
            }
            e => panic!("{e}"),
        }

        let err = ingest_measurements(&mut res, "mu,n_click,n_dark\n0.19,1,1\n0.3,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::UnmatchedGridPoint { row: 3, .. }), "{err}");

        let err = ingest_measurements(&mut res, "mu,n_click,n_dark\n0.19,x,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::CsvRow { row: 2, .. }), "{err}");
        // nothing merged by the failed attempts
        assert!(res.rows.iter().all(|r| r.measured_n_dark.is_none()));
    }

    #[test]
    fn ingest_frequency_in_khz() {
        let plan = SweepPlan::new(SweepMode::SweepF { mu: 1.5 })
            .closed_form_only()
            .with_grid(vec![30e3, 80e3]);
        let mut res = run_sweep(&plan, &det()).unwrap();
        ingest_measurements(&mut res, "f_khz,n_click,n_dark\n80,5000,650\n".as_bytes()).unwrap();
        assert_eq!(res.rows[1].measured_n_dark, Some(650.0));
    }
}
