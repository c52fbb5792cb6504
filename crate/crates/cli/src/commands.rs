//! Command implementations. Each one resolves the effective configuration
//! (flags over config file over defaults), validates it completely, does
//! the work in memory and then commits every output file at once.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde_json::json;
use spad_deadtime::fitting::{self, FitProblem, PerParameter};
use spad_deadtime::gating::{counter_mode, GateConfig, GateWindow};
use spad_deadtime::model::{self, FWHM_PER_SIGMA};
use spad_deadtime::montecarlo::{self, DarkCountConvention, SimulationConfig, RNG_ALGORITHM};
use spad_deadtime::sweep::{self, Engine, SweepMode, SweepPlan};
use spad_deadtime::timetag::{self, TimeTagStream};
use spad_deadtime::{DarkModel, DetectorParams, SourceParams};

use crate::config::{DetectorSection, GateSection, RunConfig, SourceSection, CONFIG_VERSION};
use crate::output::Outputs;
use crate::{
    Cli, CliError, Command, ConventionArg, DetectorArgs, EngineArg, Format, GateArgs, ModeArg, ModelArg, ParamArg,
    SourceArgs, StreamFormat, WindowArg,
};

const DEFAULT_OUT_DIR: &str = "out";
const DEFAULT_DEAD_TIME_US: f64 = 20.31;
const DEFAULT_JITTER_FWHM_NS: f64 = 0.52;
const DEFAULT_GATE_NS: f64 = 3.0;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.version = Some(CONFIG_VERSION);
    if let Some(dir) = &cli.out_dir {
        cfg.output.dir = Some(dir.clone());
    }
    if let Some(f) = cli.format {
        cfg.output.format = Some(format_name(f).into());
    }
    let format = parse_format(cfg.output.format.get_or_insert_with(|| "csv".into()))?;
    let out_dir = cfg.output.dir.get_or_insert_with(|| DEFAULT_OUT_DIR.into()).clone();

    let (name, outputs) = match cli.command {
        Command::Evaluate { detector, source } => {
            overlay_detector(&mut cfg.detector, &detector);
            overlay_source(&mut cfg.source, &source);
            ("evaluate", evaluate(&mut cfg, format)?)
        }
        Command::Simulate {
            detector,
            source,
            duration_s,
            no_triggers,
            dark_convention,
            stream_format,
        } => {
            overlay_detector(&mut cfg.detector, &detector);
            overlay_source(&mut cfg.source, &source);
            let sim = &mut cfg.simulation;
            set(&mut sim.duration_s, duration_s);
            set(&mut sim.seed, cli.seed);
            if no_triggers {
                sim.emit_trigger_channel = Some(false);
            }
            set(&mut sim.dark_convention, dark_convention.map(|c| convention_name(c).into()));
            set(
                &mut sim.stream_format,
                stream_format.map(|s| match s {
                    StreamFormat::Binary => "binary".into(),
                    StreamFormat::Csv => "csv".into(),
                }),
            );
            ("simulate", simulate(&mut cfg)?)
        }
        Command::Gate { input, gate } => {
            set(&mut cfg.gate.input, input);
            overlay_gate(&mut cfg.gate, &gate);
            ("gate", gate_cmd(&mut cfg, format)?)
        }
        Command::Sweep {
            detector,
            mode,
            freq_khz,
            mu,
            grid,
            engines,
            dark_models,
            duration_s,
            dark_convention,
            measurements,
            gate,
        } => {
            overlay_detector(&mut cfg.detector, &detector);
            overlay_gate(&mut cfg.gate, &gate);
            let s = &mut cfg.sweep;
            set(
                &mut s.mode,
                mode.map(|m| match m {
                    ModeArg::Mu => "mu".into(),
                    ModeArg::F => "f".into(),
                }),
            );
            set(&mut s.frequency_khz, freq_khz);
            set(&mut s.mu, mu);
            set(&mut s.grid, grid);
            set(
                &mut s.engines,
                engines.map(|v| v.into_iter().map(|e| engine_name(e).to_string()).collect()),
            );
            set(
                &mut s.dark_models,
                dark_models.map(|v| v.into_iter().map(|m| model_name(m).to_string()).collect()),
            );
            set(&mut s.duration_s, duration_s);
            set(&mut s.seed, cli.seed);
            set(&mut s.dark_convention, dark_convention.map(|c| convention_name(c).into()));
            set(&mut s.measurements, measurements);
            ("sweep", sweep_cmd(&mut cfg, format)?)
        }
        Command::Fit {
            observations,
            sweep_csv,
            sweep_manifest,
            column,
            fix,
            counting_time_s,
            initial,
        } => {
            overlay_detector(&mut cfg.detector, &initial);
            let f = &mut cfg.fit;
            set(&mut f.observations, observations);
            set(&mut f.sweep_csv, sweep_csv);
            set(&mut f.sweep_manifest, sweep_manifest);
            set(&mut f.column, column);
            set(
                &mut f.fixed,
                fix.map(|v| v.into_iter().map(|p| param_name(p).to_string()).collect()),
            );
            set(&mut f.counting_time_s, counting_time_s);
            ("fit", fit_cmd(&mut cfg)?)
        }
    };

    finish(name, &cfg, outputs, &out_dir)
}

/// Add the effective config and the manifest, then write everything.
fn finish(command: &str, cfg: &RunConfig, mut outputs: Staged, out_dir: &Path) -> Result<(), CliError> {
    let effective = toml::to_string(cfg).map_err(|e| CliError::Runtime(format!("cannot render config: {e}")))?;
    outputs.files.add("effective_config.toml", effective);
    let mut files = outputs.files.names();
    files.push("manifest.json".into());
    let mut manifest = json!({
        "command": command,
        "tool": env!("CARGO_PKG_NAME"),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_version": CONFIG_VERSION,
        "time_tag_format_version": timetag::FORMAT_VERSION,
        "rng_algorithm": RNG_ALGORITHM,
        "effective_config": cfg,
        "replay": format!("spadsim --config effective_config.toml {command}"),
        "files": files,
    });
    if let Some(extra) = outputs.manifest {
        manifest["details"] = extra;
    }
    outputs.files.add("manifest.json", to_json(&manifest)?);
    for path in outputs.files.commit(out_dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Default)]
struct Staged {
    files: Outputs,
    manifest: Option<serde_json::Value>,
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn overlay_detector(s: &mut DetectorSection, a: &DetectorArgs) {
    set(&mut s.efficiency, a.eta);
    set(&mut s.dead_time_us, a.dead_time_us);
    set(&mut s.dark_rate_cps, a.dark_rate);
    set(&mut s.jitter_sigma_ns, a.jitter_sigma_ns);
    set(&mut s.jitter_sigma_ns, a.jitter_fwhm_ns.map(|w| w / FWHM_PER_SIGMA));
}

fn overlay_source(s: &mut SourceSection, a: &SourceArgs) {
    set(&mut s.frequency_khz, a.freq_khz);
    set(&mut s.mu, a.mu);
}

fn overlay_gate(s: &mut GateSection, a: &GateArgs) {
    set(&mut s.gate_width_ns, a.gate_ns);
    set(&mut s.channel_delay_ns, a.delay_ns);
    set(&mut s.integration_time_s, a.integration_s);
    set(&mut s.repeats, a.repeats);
    set(
        &mut s.window,
        a.window.map(|w| match w {
            WindowArg::OneSided => "one_sided".into(),
            WindowArg::Symmetric => "symmetric".into(),
        }),
    );
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn parse_format(s: &str) -> Result<Format, CliError> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(invalid(format!("output.format must be `csv` or `json`, got `{other}`"))),
    }
}

fn convention_name(c: ConventionArg) -> &'static str {
    match c {
        ConventionArg::Measured => "measured",
        ConventionArg::Intrinsic => "intrinsic",
    }
}

fn parse_convention(s: &str) -> Result<DarkCountConvention, CliError> {
    match s {
        "measured" => Ok(DarkCountConvention::Measured),
        "intrinsic" => Ok(DarkCountConvention::Intrinsic),
        other => Err(invalid(format!("dark_convention must be `measured` or `intrinsic`, got `{other}`"))),
    }
}

fn engine_name(e: EngineArg) -> &'static str {
    match e {
        EngineArg::ClosedForm => "closed_form",
        EngineArg::MonteCarlo => "monte_carlo",
    }
}

fn parse_engine(s: &str) -> Result<Engine, CliError> {
    match s {
        "closed_form" => Ok(Engine::ClosedForm),
        "monte_carlo" => Ok(Engine::MonteCarlo),
        other => Err(invalid(format!("unknown engine `{other}` (closed_form, monte_carlo)"))),
    }
}

fn model_name(m: ModelArg) -> &'static str {
    match m {
        ModelArg::A => "A",
        ModelArg::B => "B",
        ModelArg::C => "C",
    }
}

fn parse_model(s: &str) -> Result<DarkModel, CliError> {
    match s {
        "A" | "a" => Ok(DarkModel::A),
        "B" | "b" => Ok(DarkModel::B),
        "C" | "c" => Ok(DarkModel::C),
        other => Err(invalid(format!("unknown dark model `{other}` (A, B, C)"))),
    }
}

fn param_name(p: ParamArg) -> &'static str {
    match p {
        ParamArg::Eta => "eta",
        ParamArg::DeadTime => "dead_time",
        ParamArg::DarkRate => "dark_rate",
    }
}

fn finite(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be finite")))
    }
}

/// Fills the detector section with defaults and builds the parameters.
fn detector(s: &mut DetectorSection) -> Result<DetectorParams, CliError> {
    let reference = DetectorParams::reference_ingaas();
    let eta = finite("efficiency", *s.efficiency.get_or_insert(reference.efficiency()))?;
    let d_us = finite("dead_time_us", *s.dead_time_us.get_or_insert(DEFAULT_DEAD_TIME_US))?;
    let n = finite("dark_rate_cps", *s.dark_rate_cps.get_or_insert(reference.dark_rate()))?;
    let jitter_ns = finite(
        "jitter_sigma_ns",
        *s.jitter_sigma_ns.get_or_insert(DEFAULT_JITTER_FWHM_NS / FWHM_PER_SIGMA),
    )?;
    Ok(DetectorParams::new(eta, d_us / 1e6, n)?.with_timing_jitter_sigma(jitter_ns / 1e9)?)
}

fn source(s: &SourceSection) -> Result<SourceParams, CliError> {
    let f = s
        .frequency_khz
        .ok_or_else(|| invalid("missing repetition frequency: pass --freq-khz or set source.frequency_khz"))?;
    let mu = s
        .mu
        .ok_or_else(|| invalid("missing mean photon number: pass --mu or set source.mu"))?;
    Ok(SourceParams::new(finite("frequency_khz", f)? * 1e3, finite("mu", mu)?)?)
}

/// Gate defaults differ per command: `(width_ns, delay_ns)`.
fn gate_config(s: &mut GateSection, (width_ns, delay_ns): (f64, f64)) -> Result<GateConfig, CliError> {
    let base = GateConfig::default();
    let window = match s.window.get_or_insert_with(|| "one_sided".into()).as_str() {
        "one_sided" => GateWindow::OneSided,
        "symmetric" => GateWindow::Symmetric,
        other => return Err(invalid(format!("gate.window must be `one_sided` or `symmetric`, got `{other}`"))),
    };
    let g = GateConfig {
        gate_width: finite("gate_width_ns", *s.gate_width_ns.get_or_insert(width_ns))? / 1e9,
        channel_delay: finite("channel_delay_ns", *s.channel_delay_ns.get_or_insert(delay_ns))? / 1e9,
        integration_time: finite(
            "integration_time_s",
            *s.integration_time_s.get_or_insert(base.integration_time),
        )?,
        repeats: *s.repeats.get_or_insert(base.repeats),
        window,
    };
    g.validate()?;
    Ok(g)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Runtime(format!("cannot render JSON: {e}")))
}

fn open(path: &Path, what: &str) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| invalid(format!("cannot open {what} {}: {e}", path.display())))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> spad_deadtime::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn evaluate(cfg: &mut RunConfig, format: Format) -> Result<Staged, CliError> {
    let det = detector(&mut cfg.detector)?;
    let src = source(&cfg.source)?;
    let rates = model::total_click_rate(&det, &src);
    let models = DarkModel::ALL.map(|m| m.rate(&det, &src));
    let report = json!({
        "frequency_hz": src.repetition_frequency(),
        "mu": src.mean_photon_number(),
        "rates": rates,
        "n_dark_model_a": models[0],
        "n_dark_model_b": models[1],
        "n_dark_model_c": models[2],
        "saturation_rate": model::saturation_rate(&det, src.repetition_frequency()),
    });
    if rates.approximation_warning {
        eprintln!("warning: N_dark D > 0.1; the exp(-N_dark D) factor is outside its small-rate regime");
    }
    let mut staged = Staged::default();
    match format {
        Format::Json => {
            let text = to_json(&report)?;
            print!("{text}");
            staged.files.add("evaluate.json", text);
        }
        Format::Csv => {
            let header = "f_hz,mu,q,p_click,p_no_dc,int_fd,photon_click_rate,dark_rate,total_rate,n_dark_model_a,n_dark_model_b,n_dark_model_c,clamped,approximation_warning";
            let row = format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                src.repetition_frequency(),
                src.mean_photon_number(),
                rates.q,
                rates.p_click,
                rates.p_no_dc,
                rates.int_fd,
                rates.photon_click_rate,
                rates.dark_rate,
                rates.total_rate,
                models[0],
                models[1],
                models[2],
                rates.clamped,
                rates.approximation_warning,
            );
            let text = format!("{header}\n{row}\n");
            print!("{text}");
            staged.files.add("evaluate.csv", text);
        }
    }
    Ok(staged)
}

fn simulate(cfg: &mut RunConfig) -> Result<Staged, CliError> {
    let det = detector(&mut cfg.detector)?;
    let src = source(&cfg.source)?;
    let sim = &mut cfg.simulation;
    let sim_cfg = SimulationConfig {
        emit_trigger_channel: *sim.emit_trigger_channel.get_or_insert(true),
        dark_convention: parse_convention(sim.dark_convention.get_or_insert_with(|| "measured".into()))?,
        ..SimulationConfig::new(
            det,
            src,
            finite("duration_s", *sim.duration_s.get_or_insert(100.0))?,
            *sim.seed.get_or_insert(0),
        )
    };
    let binary = match sim.stream_format.get_or_insert_with(|| "binary".into()).as_str() {
        "binary" => true,
        "csv" => false,
        other => return Err(invalid(format!("stream_format must be `binary` or `csv`, got `{other}`"))),
    };
    sim_cfg.validate()?;

    let out = montecarlo::simulate(&sim_cfg)?;
    let model_rate = model::total_click_rate(&det, &src).total_rate;
    let tally = json!({
        "tally": out.tally,
        "pulses": out.pulses,
        "clicks": out.stream.clicks().len(),
        "click_rate": out.click_rate(),
        "model_total_rate": model_rate,
        "simulated_dark_rate": sim_cfg.simulated_dark_rate()?,
    });
    let mut staged = Staged::default();
    let stream_name = if binary {
        staged.files.add("stream.bin", out.stream.to_binary_bytes());
        "stream.bin"
    } else {
        staged.files.add("stream.csv", csv_bytes(|b| out.stream.write_csv(b))?);
        "stream.csv"
    };
    staged.files.add("tally.json", to_json(&tally)?);
    staged.manifest = Some(json!({
        "simulation": sim_cfg,
        "stream": stream_name,
    }));
    Ok(staged)
}

fn gate_cmd(cfg: &mut RunConfig, format: Format) -> Result<Staged, CliError> {
    let input: PathBuf = cfg
        .gate
        .input
        .clone()
        .ok_or_else(|| invalid("missing time-tag input: pass --input or set gate.input"))?;
    let gate = gate_config(&mut cfg.gate, (DEFAULT_GATE_NS, 0.0))?;
    let stream = TimeTagStream::read_any(open(&input, "time-tag file")?)?;
    let report = counter_mode(&stream, &gate)?;

    let mut staged = Staged::default();
    match format {
        Format::Csv => {
            staged.files.add("counts_total.csv", csv_bytes(|b| report.total.write_csv(b))?);
            staged.files.add("counts_gated.csv", csv_bytes(|b| report.gated.write_csv(b))?);
            staged
                .files
                .add("counts_dark_inferred.csv", csv_bytes(|b| report.dark_inferred.write_csv(b))?);
        }
        Format::Json => staged.files.add("counts.json", to_json(&report)?),
    }
    staged.files.add("gate_summary.json", to_json(&report.summary())?);
    staged.manifest = Some(json!({
        "input": input,
        "input_header": stream.header,
        "gate": gate,
    }));
    Ok(staged)
}

fn sweep_cmd(cfg: &mut RunConfig, format: Format) -> Result<Staged, CliError> {
    let det = detector(&mut cfg.detector)?;
    let fallback = cfg.source.clone();
    let s = &mut cfg.sweep;
    let mode_name = s
        .mode
        .clone()
        .ok_or_else(|| invalid("missing sweep mode: pass --mode mu|f or set sweep.mode"))?;
    let mode = match mode_name.as_str() {
        "mu" => {
            let f = s
                .frequency_khz
                .or(fallback.frequency_khz)
                .ok_or_else(|| invalid("a mu sweep needs --freq-khz (or sweep.frequency_khz)"))?;
            s.frequency_khz = Some(f);
            SweepMode::SweepMu {
                frequency: finite("frequency_khz", f)? * 1e3,
            }
        }
        "f" => {
            let mu = s
                .mu
                .or(fallback.mu)
                .ok_or_else(|| invalid("a frequency sweep needs --mu (or sweep.mu)"))?;
            s.mu = Some(mu);
            SweepMode::SweepF { mu: finite("mu", mu)? }
        }
        other => return Err(invalid(format!("sweep.mode must be `mu` or `f`, got `{other}`"))),
    };
    let mut plan = SweepPlan::new(mode);
    if let Some(grid) = &s.grid {
        let scale = if matches!(mode, SweepMode::SweepF { .. }) { 1e3 } else { 1.0 };
        plan = plan.with_grid(grid.iter().map(|x| x * scale).collect());
    }
    plan.engines = s
        .engines
        .get_or_insert_with(|| vec!["closed_form".into(), "monte_carlo".into()])
        .iter()
        .map(|e| parse_engine(e))
        .collect::<Result<_, _>>()?;
    plan.dark_models = s
        .dark_models
        .get_or_insert_with(|| vec!["A".into(), "B".into(), "C".into()])
        .iter()
        .map(|m| parse_model(m))
        .collect::<Result<_, _>>()?;
    plan.duration_s = finite("duration_s", *s.duration_s.get_or_insert(plan.duration_s))?;
    plan.base_seed = *s.seed.get_or_insert(0);
    plan.dark_convention = parse_convention(s.dark_convention.get_or_insert_with(|| "measured".into()))?;
    let measurements = s.measurements.clone();
    plan.gate = gate_config(&mut cfg.gate, (DEFAULT_GATE_NS, -DEFAULT_GATE_NS / 2.0))?;
    plan.validate()?;
    let measurements = measurements.map(|p| open(&p, "measurements").map(|r| (p, r))).transpose()?;

    let mut result = sweep::run_sweep(&plan, &det)?;
    if let Some((path, reader)) = measurements {
        sweep::ingest_measurements(&mut result, reader)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    }
    for (i, row) in result.failed_points() {
        eprintln!(
            "warning: point {i} ({} = {}) failed: {}",
            plan.mode.swept_name(),
            row.swept_value,
            row.error.as_deref().unwrap_or("")
        );
    }

    let mut staged = Staged::default();
    match format {
        Format::Csv => staged.files.add("sweep.csv", csv_bytes(|b| result.write_csv(b))?),
        Format::Json => staged.files.add("sweep.json", to_json(&result)?),
    }
    let has_reference = result.rows.iter().any(|r| r.reference_dark().is_some());
    if has_reference && !plan.dark_models.is_empty() {
        let cmp = sweep::compare_dark_models(&result)?;
        staged.files.add("comparison.json", to_json(&cmp)?);
    }
    staged.manifest = Some(result.manifest());
    Ok(staged)
}

fn fit_cmd(cfg: &mut RunConfig) -> Result<Staged, CliError> {
    let f = &mut cfg.fit;
    let observations = match (&f.observations, &f.sweep_csv) {
        (Some(_), Some(_)) => return Err(invalid("give either fit.observations or fit.sweep_csv, not both")),
        (Some(path), None) => fitting::read_observations(open(path, "observations")?)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?,
        (None, Some(csv_path)) => {
            let manifest_path = f
                .sweep_manifest
                .clone()
                .ok_or_else(|| invalid("fitting a sweep CSV needs its manifest (--sweep-manifest)"))?;
            let manifest: serde_json::Value = serde_json::from_reader(open(&manifest_path, "sweep manifest")?)
                .map_err(|e| invalid(format!("{}: {e}", manifest_path.display())))?;
            // either a bare sweep manifest or one nested under `details`
            let plan_value = manifest
                .get("details")
                .unwrap_or(&manifest)
                .get("plan")
                .cloned()
                .ok_or_else(|| invalid(format!("{}: no sweep plan found", manifest_path.display())))?;
            let plan: SweepPlan = serde_json::from_value(plan_value)
                .map_err(|e| invalid(format!("{}: {e}", manifest_path.display())))?;
            let column = f.column.get_or_insert_with(|| "n_click_mc".into()).clone();
            fitting::observations_from_sweep_csv(open(csv_path, "sweep CSV")?, plan.mode, &column)
                .map_err(|e| invalid(format!("{}: {e}", csv_path.display())))?
        }
        (None, None) => return Err(invalid("missing data: pass --observations or --sweep-csv")),
    };

    let mut problem = FitProblem::new(observations);
    problem.integration_time = finite("counting_time_s", *f.counting_time_s.get_or_insert(100.0))?;
    for name in f.fixed.get_or_insert_with(Vec::new).iter() {
        match name.as_str() {
            "eta" => problem.free.efficiency = false,
            "dead_time" => problem.free.dead_time = false,
            "dark_rate" => problem.free.dark_rate = false,
            other => return Err(invalid(format!("unknown parameter `{other}` (eta, dead_time, dark_rate)"))),
        }
    }
    // initial guesses only when given explicitly; the library defaults
    // otherwise stay out of the way of the scan
    let d = &cfg.detector;
    problem.initial = PerParameter {
        efficiency: d.efficiency.unwrap_or(problem.initial.efficiency),
        dead_time: d.dead_time_us.map_or(problem.initial.dead_time, |us| us / 1e6),
        dark_rate: d.dark_rate_cps.unwrap_or(problem.initial.dark_rate),
    };
    problem.validate()?;

    let result = fitting::fit(&problem)?;
    let mut staged = Staged::default();
    staged.files.add(
        "fit.json",
        to_json(&json!({
            "estimates": {
                "efficiency": result.estimates.efficiency,
                "dead_time_us": result.estimates.dead_time * 1e6,
                "dark_rate_cps": result.estimates.dark_rate,
            },
            "standard_errors": {
                "efficiency": result.standard_errors.efficiency,
                "dead_time_us": result.standard_errors.dead_time * 1e6,
                "dark_rate_cps": result.standard_errors.dark_rate,
            },
            "result": result,
        }))?,
    );
    staged.manifest = Some(json!({ "observations": problem.observations.len(), "free": problem.free }));
    Ok(staged)
}
