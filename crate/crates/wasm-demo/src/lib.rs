//! Browser bindings for the demo page. Every export returns a flat
//! `Float64Array` of fixed-stride rows so the page can plot it without a
//! serialisation layer.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use spad_deadtime::gating::{counter_mode, GateConfig};
use spad_deadtime::model::{is_discontinuity, total_click_rate};
use spad_deadtime::montecarlo::{simulate, SimulationConfig};
use spad_deadtime::sweep::log_grid;
use spad_deadtime::{DarkModel, DetectorParams, SourceParams};
use wasm_bindgen::prelude::*;

/// `[mu, n_click, photon_rate, dark_a, dark_b, dark_c]`
pub const MU_CURVE_STRIDE: usize = 6;
/// `[f_khz, n_click, dark_a, discontinuity]`
pub const SAWTOOTH_STRIDE: usize = 4;

fn detector(eta: f64, dead_time_us: f64, dark_rate: f64) -> spad_deadtime::Result<DetectorParams> {
    DetectorParams::new(eta, dead_time_us / 1e6, dark_rate)
}

pub fn mu_curve_rows(
    eta: f64,
    dead_time_us: f64,
    dark_rate: f64,
    freq_khz: f64,
    mu_min: f64,
    mu_max: f64,
    points: usize,
) -> spad_deadtime::Result<Vec<f64>> {
    let det = detector(eta, dead_time_us, dark_rate)?;
    let mut out = Vec::with_capacity(points * MU_CURVE_STRIDE);
    for mu in log_grid(mu_min, mu_max, points) {
        let src = SourceParams::new(freq_khz * 1e3, mu)?;
        let r = total_click_rate(&det, &src);
        out.extend([mu, r.total_rate, r.photon_click_rate]);
        out.extend(DarkModel::ALL.map(|m| m.rate(&det, &src)));
    }
    Ok(out)
}

pub fn sawtooth_rows(
    eta: f64,
    dead_time_us: f64,
    dark_rate: f64,
    mu: f64,
    f_min_khz: f64,
    f_max_khz: f64,
    step_khz: f64,
) -> spad_deadtime::Result<Vec<f64>> {
    let det = detector(eta, dead_time_us, dark_rate)?;
    if !(step_khz > 0.0) || !(f_max_khz >= f_min_khz) {
        return Err(spad_deadtime::Error::InvalidParameter {
            name: "step_khz",
            reason: "need a positive step and f_max >= f_min".into(),
        });
    }
    let n = ((f_max_khz - f_min_khz) / step_khz).floor() as usize + 1;
    let mut out = Vec::with_capacity(n * SAWTOOTH_STRIDE);
    for i in 0..n {
        let f_khz = f_min_khz + i as f64 * step_khz;
        let src = SourceParams::new(f_khz * 1e3, mu)?;
        let r = total_click_rate(&det, &src);
        let flag = is_discontinuity(f_khz * 1e3, det.dead_time(), 1e-9);
        out.extend([f_khz, r.total_rate, r.dark_rate, f64::from(u8::from(flag))]);
    }
    Ok(out)
}

/// `[mc_rate, mc_std_error, model_rate, mc_dark_inferred, model_dark,
/// photon_clicks, dark_clicks]` for one simulated acquisition counted in
/// `windows` equal windows through a centred 3 ns gate.
#[allow(clippy::too_many_arguments)]
pub fn simulate_point_row(
    eta: f64,
    dead_time_us: f64,
    dark_rate: f64,
    freq_khz: f64,
    mu: f64,
    duration_s: f64,
    windows: usize,
    seed: u64,
) -> spad_deadtime::Result<Vec<f64>> {
    let det = detector(eta, dead_time_us, dark_rate)?;
    let src = SourceParams::new(freq_khz * 1e3, mu)?;
    let out = simulate(&SimulationConfig::new(det, src, duration_s, seed))?;
    let gate = GateConfig {
        integration_time: duration_s / windows.max(1) as f64,
        repeats: windows.max(1),
        ..GateConfig::centered()
    };
    let counts = counter_mode(&out.stream, &gate)?;
    let model = total_click_rate(&det, &src);
    Ok(vec![
        counts.total.rate_mean,
        counts.total.standard_error(),
        model.total_rate,
        counts.dark_inferred.rate_mean,
        model.dark_rate,
        out.tally.photon_clicks as f64,
        out.tally.dark_clicks as f64,
    ])
}

fn js(e: spad_deadtime::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = muCurve)]
pub fn mu_curve(
    eta: f64,
    dead_time_us: f64,
    dark_rate: f64,
    freq_khz: f64,
    mu_min: f64,
    mu_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    mu_curve_rows(eta, dead_time_us, dark_rate, freq_khz, mu_min, mu_max, points).map_err(js)
}

#[wasm_bindgen]
pub fn sawtooth(
    eta: f64,
    dead_time_us: f64,
    dark_rate: f64,
    mu: f64,
    f_min_khz: f64,
    f_max_khz: f64,
    step_khz: f64,
) -> Result<Vec<f64>, JsError> {
    sawtooth_rows(eta, dead_time_us, dark_rate, mu, f_min_khz, f_max_khz, step_khz).map_err(js)
}

#[wasm_bindgen(js_name = simulatePoint)]
#[allow(clippy::too_many_arguments)]
pub fn simulate_point(
    eta: f64,
    dead_time_us: f64,
    dark_rate: f64,
    freq_khz: f64,
    mu: f64,
    duration_s: f64,
    windows: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    simulate_point_row(eta, dead_time_us, dark_rate, freq_khz, mu, duration_s, windows, u64::from(seed)).map_err(js)
}
