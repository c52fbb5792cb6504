//! Least-squares estimation of `(eta, D, N_dark)` from observed click rates.
//!
//! `eta` and `mu` only ever appear as the product `eta mu`, so `eta` is
//! identifiable only because every observation carries an independently
//! calibrated `mu`. Feed it mislabelled `mu` and `eta` absorbs the error.
//!
//! `Int(f D)` makes the count-rate model piecewise in `D`: it jumps whenever
//! `D` crosses some `k / f_i`. The solver therefore scans a grid of `D`
//! values (refining around the best point), fits `(eta, N_dark)` by bounded
//! Levenberg-Marquardt at each, and finishes with a joint polish of all free
//! parameters inside the smooth cell of `D` that holds the best point.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{click_probability_raw, detection_probability_raw, is_discontinuity};
use crate::sweep::{SweepMode, DISCONTINUITY_EPSILON};

const MAX_ITERATIONS: usize = 500;
const STEP_TOLERANCE: f64 = 1e-13;
const MAX_DAMPING: f64 = 1e20;
const OBJECTIVE_TOLERANCE: f64 = 1e-15;
/// Singular-value ratio below which the scaled design counts as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// One value per model parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerParameter<T> {
    pub efficiency: T,
    pub dead_time: T,
    pub dark_rate: T,
}

impl<T: Copy> PerParameter<T> {
    pub fn splat(v: T) -> Self {
        PerParameter {
            efficiency: v,
            dead_time: v,
            dark_rate: v,
        }
    }

    pub fn to_array(self) -> [T; 3] {
        [self.efficiency, self.dead_time, self.dark_rate]
    }

    pub fn from_array([efficiency, dead_time, dark_rate]: [T; 3]) -> Self {
        PerParameter {
            efficiency,
            dead_time,
            dark_rate,
        }
    }
}

const NAMES: [&str; 3] = ["efficiency", "dead_time", "dark_rate"];
const DEAD: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Hz.
    pub frequency: f64,
    pub mu: f64,
    /// Counts per second.
    pub n_click: f64,
    /// Least-squares weight; `None` uses the problem's Poisson default.
    #[serde(default)]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub observations: Vec<Observation>,
    pub free: PerParameter<bool>,
    pub bounds: PerParameter<(f64, f64)>,
    pub initial: PerParameter<f64>,
    /// Counting time behind each observed rate, seconds. The default weight
    /// is the inverse Poisson variance `T / N_click`.
    pub integration_time: f64,
    /// Points in the initial scan over `D`.
    pub dead_time_grid: usize,
    /// Number of zoom-in stages around the best scan point.
    pub refinement_stages: usize,
}

impl FitProblem {
    /// All three parameters free, with bounds wide enough for InGaAs SPADs.
    pub fn new(observations: Vec<Observation>) -> Self {
        FitProblem {
            observations,
            free: PerParameter::splat(true),
            bounds: PerParameter {
                efficiency: (1e-4, 1.0),
                dead_time: (1e-6, 100e-6),
                dark_rate: (0.0, 1e5),
            },
            initial: PerParameter {
                efficiency: 0.05,
                dead_time: 10e-6,
                dark_rate: 100.0,
            },
            integration_time: 100.0,
            dead_time_grid: 400,
            refinement_stages: 8,
        }
    }

    fn weight(&self, obs: &Observation) -> f64 {
        obs.weight
            .unwrap_or_else(|| self.integration_time / obs.n_click.max(1.0))
    }

    fn free_indices(&self) -> Vec<usize> {
        self.free
            .to_array()
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n_free = self.free_indices().len();
        if n_free == 0 {
            return Err(Error::invalid("free", "no parameter is free"));
        }
        if self.observations.len() < n_free {
            return Err(Error::DegenerateDesign(format!(
                "{} observation(s) cannot determine {n_free} free parameters",
                self.observations.len()
            )));
        }
        for (i, ((lo, hi), x0)) in self
            .bounds
            .to_array()
            .into_iter()
            .zip(self.initial.to_array())
            .enumerate()
        {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(NAMES[i], format!("bounds ({lo}, {hi}) must be finite and ordered")));
            }
            if !(lo..=hi).contains(&x0) {
                return Err(Error::invalid(NAMES[i], format!("initial value {x0} outside ({lo}, {hi})")));
            }
        }
        if self.bounds.efficiency.0 < 0.0 || self.bounds.efficiency.1 > 1.0 {
            return Err(Error::invalid("efficiency", "bounds must lie within [0, 1]"));
        }
        if self.bounds.dead_time.0 <= 0.0 {
            return Err(Error::invalid("dead_time", "lower bound must be > 0"));
        }
        if self.bounds.dark_rate.0 < 0.0 {
            return Err(Error::invalid("dark_rate", "lower bound must be >= 0"));
        }
        if !(self.integration_time.is_finite() && self.integration_time > 0.0) {
            return Err(Error::invalid("integration_time", "must be > 0"));
        }
        if self.free.dead_time && self.dead_time_grid < 2 {
            return Err(Error::invalid("dead_time_grid", "need at least 2 scan points"));
        }
        for (row, o) in self.observations.iter().enumerate() {
            let ok = o.frequency.is_finite()
                && o.frequency > 0.0
                && o.mu.is_finite()
                && o.mu >= 0.0
                && o.n_click.is_finite()
                && o.n_click >= 0.0;
            if !ok {
                return Err(Error::CsvRow {
                    row,
                    message: format!("observation {o:?} is not physical"),
                });
            }
            let w = self.weight(o);
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid("weight", format!("observation {row}: weight {w} must be > 0")));
            }
        }
        let d0 = self.initial.dead_time;
        if self
            .observations
            .iter()
            .all(|o| is_discontinuity(o.frequency, d0, DISCONTINUITY_EPSILON))
        {
            return Err(Error::DegenerateDesign(
                "every observation sits on a multiple of the inverse dead time".into(),
            ));
        }
        Ok(())
    }
}

/// Count-rate model and its partial derivatives with `Int(f D)` held at
/// `ladder`.
#[derive(Debug, Clone, Copy)]
struct Evaluation {
    value: f64,
    grad: [f64; 3],
}

fn evaluate(theta: &[f64; 3], f: f64, mu: f64, ladder: u64) -> Evaluation {
    let [eta, d, nd] = *theta;
    let q = detection_probability_raw(eta, mu);
    let p = click_probability_raw(q, ladder);
    let no_dc = (-nd * d).exp();
    let value = f * p * no_dc + nd * (1.0 - p * f * d);

    let denom = 1.0 + ladder as f64 * q;
    let dp_deta = mu * (-eta * mu).exp() / (denom * denom);
    Evaluation {
        value,
        grad: [
            (f * no_dc - nd * f * d) * dp_deta,
            -f * p * nd * no_dc - nd * p * f,
            -f * p * d * no_dc + (1.0 - p * f * d),
        ],
    }
}

fn ladder(f: f64, d: f64) -> u64 {
    (f * d).floor() as u64
}

/// Weighted sum of squared residuals, with `Int(f D)` recomputed from `theta`.
pub fn objective(problem: &FitProblem, theta: PerParameter<f64>) -> f64 {
    let t = theta.to_array();
    problem
        .observations
        .iter()
        .map(|o| {
            let r = evaluate(&t, o.frequency, o.mu, ladder(o.frequency, t[DEAD])).value - o.n_click;
            problem.weight(o) * r * r
        })
        .sum()
}

/// Analytic gradient of the model for one observation, `D`-derivative taken
/// inside the current smooth cell.
pub fn model_gradient(theta: PerParameter<f64>, frequency: f64, mu: f64) -> [f64; 3] {
    let t = theta.to_array();
    evaluate(&t, frequency, mu, ladder(frequency, t[DEAD])).grad
}

/// One stage of the dead-time scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileStage {
    pub dead_time_range: (f64, f64),
    pub points: usize,
    pub best_dead_time: f64,
    pub best_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub degrees_of_freedom: usize,
    pub reduced_chi_square: f64,
    /// Interval of `D` over which `Int(f_i D)` is constant for every
    /// observation, around the estimate.
    pub dead_time_cell: (f64, f64),
    pub inner_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: PerParameter<f64>,
    /// Zero for parameters held fixed.
    pub standard_errors: PerParameter<f64>,
    /// Unweighted RMS of `model - observed`, counts per second.
    pub residual_rms: f64,
    pub diagnostics: FitDiagnostics,
    pub dead_time_profile: Vec<ProfileStage>,
}

struct LmOutcome {
    theta: [f64; 3],
    objective: f64,
    iterations: usize,
}

/// Bounded Levenberg-Marquardt over the parameters in `free`, with every
/// observation's ladder fixed. `d_limits` narrows the dead-time bounds.
fn levenberg_marquardt(
    problem: &FitProblem,
    start: [f64; 3],
    free: &[usize],
    ladders: &[u64],
    d_limits: (f64, f64),
) -> Result<LmOutcome> {
    let mut bounds = problem.bounds.to_array();
    bounds[DEAD] = d_limits;
    let weights: Vec<f64> = problem.observations.iter().map(|o| problem.weight(o).sqrt()).collect();

    let residuals = |theta: &[f64; 3]| -> (DVector<f64>, f64) {
        let r = DVector::from_iterator(
            problem.observations.len(),
            problem
                .observations
                .iter()
                .zip(ladders)
                .zip(&weights)
                .map(|((o, &n), w)| w * (evaluate(theta, o.frequency, o.mu, n).value - o.n_click)),
        );
        let s = r.norm_squared();
        (r, s)
    };
    let jacobian = |theta: &[f64; 3]| -> DMatrix<f64> {
        let mut j = DMatrix::zeros(problem.observations.len(), free.len());
        for (row, ((o, &n), w)) in problem.observations.iter().zip(ladders).zip(&weights).enumerate() {
            let g = evaluate(theta, o.frequency, o.mu, n).grad;
            for (col, &k) in free.iter().enumerate() {
                j[(row, col)] = w * g[k];
            }
        }
        j
    };

    let mut theta = start;
    for &k in free {
        theta[k] = theta[k].clamp(bounds[k].0, bounds[k].1);
    }
    let (mut r, mut s) = residuals(&theta);
    if free.is_empty() {
        return Ok(LmOutcome {
            theta,
            objective: s,
            iterations: 0,
        });
    }
    let mut lambda = 1e-3;
    for iteration in 1..=MAX_ITERATIONS {
        let done = LmOutcome {
            theta,
            objective: s,
            iterations: iteration,
        };
        if s == 0.0 {
            return Ok(done);
        }
        let j_full = jacobian(&theta);
        let g_full = j_full.transpose() * &r;
        // parameters pinned at a bound with the gradient pushing outward sit
        // this step out
        let active: Vec<usize> = (0..free.len())
            .filter(|&col| {
                let k = free[col];
                let at_lo = theta[k] <= bounds[k].0 && g_full[col] > 0.0;
                let at_hi = theta[k] >= bounds[k].1 && g_full[col] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        if active.is_empty() {
            return Ok(done);
        }
        let j = j_full.select_columns(&active);
        let g = g_full.select_rows(&active);
        let jtj = j.transpose() * &j;
        let diag: Vec<f64> = (0..active.len()).map(|i| jtj[(i, i)].max(1e-300)).collect();

        let mut accepted = None;
        while lambda <= MAX_DAMPING {
            let mut a = jtj.clone();
            for (i, di) in diag.iter().enumerate() {
                a[(i, i)] += lambda * di;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut trial = theta;
            for (i, &col) in active.iter().enumerate() {
                let k = free[col];
                trial[k] = (theta[k] + delta[i]).clamp(bounds[k].0, bounds[k].1);
            }
            let moved = free
                .iter()
                .map(|&k| (trial[k] - theta[k]).abs() / (theta[k].abs() + (bounds[k].1 - bounds[k].0) * 1e-12))
                .fold(0.0, f64::max);
            if moved < STEP_TOLERANCE {
                return Ok(done);
            }
            let (r_new, s_new) = residuals(&trial);
            if s_new < s {
                accepted = Some((trial, r_new, s_new));
                lambda = (lambda / 10.0).max(1e-15);
                break;
            }
            lambda *= 10.0;
        }
        // no descent direction left at machine precision
        let Some((trial, r_new, s_new)) = accepted else {
            return Ok(done);
        };
        let gain = (s - s_new) / s;
        theta = trial;
        r = r_new;
        s = s_new;
        if gain < OBJECTIVE_TOLERANCE {
            return Ok(LmOutcome {
                theta,
                objective: s,
                iterations: iteration,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        objective: s,
        best: theta,
    })
}

/// Cell of `D` around `d` in which every `Int(f_i D)` is constant.
fn smooth_cell(problem: &FitProblem, d: f64) -> (f64, f64) {
    let (mut lo, mut hi) = problem.bounds.dead_time;
    for o in &problem.observations {
        let n = ladder(o.frequency, d) as f64;
        if n >= 1.0 {
            lo = lo.max(n / o.frequency);
        }
        hi = hi.min((n + 1.0) / o.frequency);
    }
    // stay clear of the breakpoints themselves
    let margin = 1e-12 * d;
    (lo + margin, (hi - margin).max(lo + margin))
}

fn inner_fit(problem: &FitProblem, d: f64) -> Result<LmOutcome> {
    let free: Vec<usize> = problem.free_indices().into_iter().filter(|&k| k != DEAD).collect();
    let ladders: Vec<u64> = problem.observations.iter().map(|o| ladder(o.frequency, d)).collect();
    let mut start = problem.initial.to_array();
    start[DEAD] = d;
    levenberg_marquardt(problem, start, &free, &ladders, (d, d))
}

struct ScanPoint {
    index: usize,
    d: f64,
    outcome: LmOutcome,
}

fn scan(problem: &FitProblem, grid: &[f64]) -> Result<Vec<ScanPoint>> {
    let fit_one = |(index, &d): (usize, &f64)| inner_fit(problem, d).map(|outcome| ScanPoint { index, d, outcome });

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        grid.par_iter().enumerate().map(fit_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        grid.iter().enumerate().map(fit_one).collect()
    }
}

fn best_of(points: &[ScanPoint]) -> &ScanPoint {
    points
        .iter()
        .min_by(|a, b| {
            a.outcome
                .objective
                .total_cmp(&b.outcome.objective)
                .then(a.index.cmp(&b.index))
        })
        .expect("scan grids are never empty")
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Minimise the weighted squared residuals of the count-rate model.
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let free = problem.free_indices();
    let mut profile = Vec::new();
    let mut inner_fits = 0;

    let mut theta = problem.initial.to_array();
    if problem.free.dead_time {
        let (lo, hi) = problem.bounds.dead_time;
        let mut grid = linspace(lo, hi, problem.dead_time_grid);
        let mut best_d = f64::NAN;
        let mut best_obj = f64::INFINITY;
        let mut best_theta = theta;
        for stage in 0..=problem.refinement_stages {
            let points = scan(problem, &grid)?;
            inner_fits += points.len();
            let b = best_of(&points);
            // the previous best stays eligible, so a stage can only improve
            if b.outcome.objective < best_obj || stage == 0 {
                best_obj = b.outcome.objective;
                best_d = b.d;
                best_theta = b.outcome.theta;
            }
            profile.push(ProfileStage {
                dead_time_range: (grid[0], grid[grid.len() - 1]),
                points: grid.len(),
                best_dead_time: best_d,
                best_objective: best_obj,
            });
            let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
            let (a, b) = ((best_d - step).max(lo), (best_d + step).min(hi));
            grid = linspace(a, b, 17);
        }
        theta = best_theta;
        theta[DEAD] = best_d;
    } else {
        let out = inner_fit(problem, theta[DEAD])?;
        inner_fits += 1;
        theta = out.theta;
    }

    // joint polish inside the smooth cell
    let cell = smooth_cell(problem, theta[DEAD]);
    let ladders: Vec<u64> = problem
        .observations
        .iter()
        .map(|o| ladder(o.frequency, theta[DEAD]))
        .collect();
    let d_limits = if problem.free.dead_time { cell } else { (theta[DEAD], theta[DEAD]) };
    let polished = levenberg_marquardt(problem, theta, &free, &ladders, d_limits)?;
    let theta = polished.theta;

    // covariance s^2 (J^T W J)^-1 on the free parameters
    let m = problem.observations.len();
    let bounds = problem.bounds.to_array();
    let scale: Vec<f64> = free
        .iter()
        .map(|&k| if theta[k] != 0.0 { theta[k].abs() } else { bounds[k].1 - bounds[k].0 })
        .collect();
    let mut j = DMatrix::zeros(m, free.len());
    let mut sq = 0.0;
    for (row, (o, &n)) in problem.observations.iter().zip(&ladders).enumerate() {
        let e = evaluate(&theta, o.frequency, o.mu, n);
        let w = problem.weight(o).sqrt();
        for (col, &k) in free.iter().enumerate() {
            // scale columns so the rank test is unit-free
            j[(row, col)] = w * e.grad[k] * scale[col];
        }
        sq += (e.value - o.n_click).powi(2);
    }
    let svd = j.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < RANK_TOLERANCE {
        return Err(Error::DegenerateDesign(format!(
            "observations cannot separate the free parameters (singular value ratio {:.3e})",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let dof = m - free.len();
    let reduced = if dof > 0 { polished.objective / dof as f64 } else { 0.0 };
    let cov = (j.transpose() * &j)
        .try_inverse()
        .ok_or_else(|| Error::DegenerateDesign("normal matrix is singular".into()))?;
    let mut se = [0.0; 3];
    for (col, &k) in free.iter().enumerate() {
        se[k] = (reduced * cov[(col, col)]).sqrt() * scale[col];
    }

    Ok(FitResult {
        estimates: PerParameter::from_array(theta),
        standard_errors: PerParameter::from_array(se),
        residual_rms: (sq / m as f64).sqrt(),
        diagnostics: FitDiagnostics {
            converged: true,
            iterations: polished.iterations,
            objective: polished.objective,
            degrees_of_freedom: dof,
            reduced_chi_square: reduced,
            dead_time_cell: cell,
            inner_fits,
        },
        dead_time_profile: profile,
    })
}

/// Observations from a sweep CSV: `swept_value` plus the chosen click-rate
/// column (`n_click_mc` or `n_click_model`). Rows with an empty cell are
/// skipped, as are points flagged as sitting on a discontinuity.
pub fn observations_from_sweep_csv<R: Read>(reader: R, mode: SweepMode, column: &str) -> Result<Vec<Observation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn { column: name.into() })
    };
    let x_col = find("swept_value")?;
    let n_col = find(column)?;
    let flag_col = headers.iter().position(|h| h == "discontinuity_flag");

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::CsvRow {
            row: line,
            message: e.to_string(),
        })?;
        let raw_n = rec.get(n_col).unwrap_or("");
        if raw_n.is_empty() || flag_col.and_then(|c| rec.get(c)) == Some("1") {
            continue;
        }
        let parse = |raw: &str| {
            raw.parse::<f64>().map_err(|_| Error::CsvRow {
                row: line,
                message: format!("{raw:?} is not a number"),
            })
        };
        let (frequency, mu) = mode.point(parse(rec.get(x_col).unwrap_or(""))?);
        out.push(Observation {
            frequency,
            mu,
            n_click: parse(raw_n)?,
            weight: None,
        });
    }
    Ok(out)
}

/// Observations from a CSV with columns `f_hz` or `f_khz`, `mu`, `n_click`
/// and an optional `weight`.
pub fn read_observations<R: Read>(reader: R) -> Result<Vec<Observation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (f_col, scale) = match (find("f_hz"), find("f_khz")) {
        (Some(i), _) => (i, 1.0),
        (None, Some(i)) => (i, 1e3),
        (None, None) => return Err(Error::MissingColumn { column: "f_hz".into() }),
    };
    let mu_col = find("mu").ok_or_else(|| Error::MissingColumn { column: "mu".into() })?;
    let n_col = find("n_click").ok_or_else(|| Error::MissingColumn { column: "n_click".into() })?;
    let w_col = find("weight");

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::CsvRow {
            row: line,
            message: e.to_string(),
        })?;
        let num = |col: usize| -> Result<f64> {
            let raw = rec.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::CsvRow {
                row: line,
                message: format!("`{}` = {raw:?} is not a number", &headers[col]),
            })
        };
        let weight = match w_col {
            Some(c) if !rec.get(c).unwrap_or("").is_empty() => Some(num(c)?),
            _ => None,
        };
        out.push(Observation {
            frequency: num(f_col)? * scale,
            mu: num(mu_col)?,
            n_click: num(n_col)?,
            weight,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{total_click_rate, DetectorParams, SourceParams};

    fn truth() -> PerParameter<f64> {
        PerParameter {
            efficiency: 0.1,
            dead_time: 20.31e-6,
            dark_rate: 805.2,
        }
    }

    fn noiseless(points: &[(f64, f64)]) -> Vec<Observation> {
        let det = DetectorParams::reference_ingaas();
        points
            .iter()
            .map(|&(f, mu)| Observation {
                frequency: f,
                mu,
                n_click: total_click_rate(&det, &SourceParams::new(f, mu).unwrap()).total_rate,
                weight: None,
            })
            .collect()
    }

    fn small_design() -> Vec<Observation> {
        let mut pts = Vec::new();
        for f in [20e3, 30e3, 45e3, 60e3, 80e3, 110e3, 130e3, 150e3] {
            for mu in [0.19, 1.5, 5.0, 20.5] {
                pts.push((f, mu));
            }
        }
        noiseless(&pts)
    }

    #[test]
    fn objective_vanishes_at_the_generating_parameters() {
        let p = FitProblem::new(small_design());
        let s = objective(&p, truth());
        assert!(s < 1e-18, "{s}");
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let t = truth().to_array();
        for (f, mu) in [(30e3, 0.19), (80e3, 1.5), (130e3, 20.5), (170e3, 3.0)] {
            let n = ladder(f, t[DEAD]);
            let g = evaluate(&t, f, mu, n).grad;
            for k in 0..3 {
                let h = t[k] * 1e-6;
                let (mut up, mut dn) = (t, t);
                up[k] += h;
                dn[k] -= h;
                let fd = (evaluate(&up, f, mu, n).value - evaluate(&dn, f, mu, n).value) / (2.0 * h);
                let rel = (g[k] - fd).abs() / fd.abs().max(1e-300);
                assert!(rel < 1e-5, "f={f} mu={mu} param {}: {} vs {fd}", NAMES[k], g[k]);
            }
        }
    }

    #[test]
    fn noiseless_recovery() {
        let p = FitProblem::new(small_design());
        let r = fit(&p).unwrap();
        let est = r.estimates.to_array();
        for (k, (e, t)) in est.iter().zip(truth().to_array()).enumerate() {
            assert!(((e - t) / t).abs() < 1e-6, "{}: {e} vs {t}", NAMES[k]);
        }
        assert!(r.residual_rms < 1e-6);
    }

    #[test]
    fn refinement_never_worsens_the_best_objective() {
        let r = fit(&FitProblem::new(small_design())).unwrap();
        assert_eq!(r.dead_time_profile.len(), 9);
        for w in r.dead_time_profile.windows(2) {
            assert!(w[1].best_objective <= w[0].best_objective);
        }
    }

    #[test]
    fn fixed_dead_time_fits_the_rest() {
        let mut p = FitProblem::new(small_design());
        p.free.dead_time = false;
        p.initial.dead_time = 20.31e-6;
        let r = fit(&p).unwrap();
        assert!(r.dead_time_profile.is_empty());
        assert_eq!(r.standard_errors.dead_time, 0.0);
        assert!((r.estimates.efficiency - 0.1).abs() < 1e-9);
        assert!((r.estimates.dark_rate - 805.2).abs() < 1e-6);
    }

    #[test]
    fn single_observation_is_degenerate() {
        let p = FitProblem::new(noiseless(&[(30e3, 1.0)]));
        assert!(matches!(fit(&p), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn saturated_design_cannot_separate_efficiency() {
        let pts: Vec<_> = [20e3, 60e3, 120e3].iter().map(|&f| (f, 1e4)).collect();
        let mut p = FitProblem::new(noiseless(&pts));
        p.free.dead_time = false;
        p.initial.dead_time = 20.31e-6;
        assert!(matches!(fit(&p), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn invalid_problems_rejected() {
        let mut p = FitProblem::new(small_design());
        p.bounds.efficiency = (0.5, 0.1);
        assert!(p.validate().is_err());
        let mut p = FitProblem::new(small_design());
        p.initial.dark_rate = -1.0;
        assert!(p.validate().is_err());
        let mut p = FitProblem::new(small_design());
        p.observations[0].weight = Some(0.0);
        assert!(p.validate().is_err());
        let mut p = FitProblem::new(noiseless(&[(1.0 / 20e-6, 1.0), (2.0 / 20e-6, 2.0), (3.0 / 20e-6, 4.0)]));
        p.initial.dead_time = 20e-6;
        assert!(matches!(p.validate(), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn reads_observation_csv() {
        let csv = "f_khz,mu,n_click,weight\n30,1.0,3567.08,\n80,1.5,5000,0.5\n";
        let obs = read_observations(csv.as_bytes()).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].frequency, 30e3);
        assert_eq!(obs[0].weight, None);
        assert_eq!(obs[1].weight, Some(0.5));
        assert!(matches!(
            read_observations("f_khz,n_click\n1,2\n".as_bytes()),
            Err(Error::MissingColumn { .. })
        ));
    }
}
