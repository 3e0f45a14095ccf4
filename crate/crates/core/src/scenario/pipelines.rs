use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{fmt_num, FileLoader, Prepared, Result, ScenarioError, ScenarioKind};
use crate::analysis::{
    field_noise_from_heating, gate_detuning_error, heating_rate_fit, power_law_fit_freq,
    power_law_fit_temp, voltage_noise, CalibrationTable, FitMethod, FitResult, MeasurementPoint,
    MeasurementSeries, RatePoint,
};
use crate::circuit::{injection_drop, suppression_factor, C_EXT_BOARD};
use crate::constants::omega_from_mhz;
use crate::mux::{
    parse_script, plan_refresh, write_events_csv, Command, Event, FrameFormat, RefreshInputs, Route,
    SwitchMatrix,
};
use crate::trap::{AxialWell, TrapError};
use crate::waveforms::{
    build_transport, compensate, solve_shim, solve_well, ElectrodeSubset, SolveOptions, TransportOptions,
};
use crate::{IonSpecies, TrapLayout, VoltageSet};

const CALIBRATION_TWO_POINT: &str = include_str!("../../presets/calibration_two_point.csv");

/// Co-wiring period used when a scenario builds a switch matrix.
const WIRING_PERIOD: usize = 9;

/// Kind-specific parameters, checked before anything runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    ChargeInjection(ChargeInjection),
    FloatingDecay(FloatingDecay),
    CoupledDecay(CoupledDecay),
    HeatingFit(HeatingFit, Vec<Dataset>),
    RefreshBudget(RefreshBudget),
    Transport(Transport),
    Shim(Shim),
    NoiseInference(NoiseInference),
    Calibration(Calibration, CalibrationTable),
}

pub(crate) struct Outcome {
    pub summary: BTreeMap<String, Value>,
    pub records: Vec<Value>,
    pub warnings: Vec<String>,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new() -> Self {
        Self { summary: BTreeMap::new(), records: Vec::new(), warnings: Vec::new(), files: Vec::new() }
    }

    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }
}

fn params<T: DeserializeOwned>(files: &FileLoader, kind: ScenarioKind, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone())
        .map_err(|e| files.invalid(format!("params ({}): {e}", serde_json::to_string(&kind).unwrap_or_default())))
}

fn default_window() -> [f64; 2] {
    [-100.0, 100.0]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeInjection {
    pub electrode: String,
    /// DAC voltages of the electrodes closed before the switch opens.
    pub voltages: VoltageSet,
    #[serde(default = "default_window")]
    pub window_um: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScriptSource {
    Inline(String),
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloatingDecay {
    pub voltages: VoltageSet,
    pub script: ScriptSource,
    pub duration_s: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Override the preset leakage so that floating electrodes decay at this rate.
    #[serde(default)]
    pub decay_rate_v_per_min: Option<f64>,
    #[serde(default = "default_window")]
    pub window_um: [f64; 2],
    #[serde(skip)]
    pub commands: Vec<Command>,
}

fn default_samples() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveStep {
    pub t_s: f64,
    pub electrode: String,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledDecay {
    pub voltages: VoltageSet,
    pub open: Vec<String>,
    #[serde(default)]
    pub steps: Vec<DriveStep>,
    pub duration_s: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub decay_rate_v_per_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Points(Vec<MeasurementPoint>),
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Axial frequency (MHz) for the frequency law, metal temperature (K) for the temperature law.
    pub x: f64,
    pub data: DataSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitLaw {
    Frequency,
    Temperature,
    RateOnly,
}

/// Noisy heating curves drawn from `n1 * f^-alpha` at the listed frequencies.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synthetic {
    pub n1: f64,
    pub alpha: f64,
    pub freqs_mhz: Vec<f64>,
    pub delays_s: Vec<f64>,
    pub sigma: f64,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatingFit {
    #[serde(default)]
    pub datasets: Vec<DatasetSpec>,
    #[serde(default)]
    pub synthetic: Option<Synthetic>,
    pub law: FitLaw,
    /// Axial frequency of the temperature series (MHz).
    #[serde(default)]
    pub omega_mhz: Option<f64>,
    #[serde(default)]
    pub method: FitMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: f64,
    pub series: MeasurementSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefreshBudget {
    pub electrodes: usize,
    pub clock_hz: f64,
    pub settle_s: f64,
    pub error_budget: f64,
    pub gate_time_s: f64,
    /// Secular frequency drift while floating (Hz per ms).
    pub drift_hz_per_ms: f64,
    pub min_refresh_hz: f64,
    /// Hold time at which the infidelity is also reported (ms).
    pub hold_ms: f64,
}

impl Default for RefreshBudget {
    fn default() -> Self {
        Self {
            electrodes: 98,
            clock_hz: 500e3,
            settle_s: 41e-6,
            error_budget: 1e-4,
            gate_time_s: 500e-6,
            drift_hz_per_ms: 0.4,
            min_refresh_hz: 20.0,
            hold_ms: 50.0,
        }
    }
}

fn default_transport_window() -> f64 {
    100.0
}

fn default_bound() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transport {
    pub start_um: f64,
    pub end_um: f64,
    pub step_um: f64,
    pub freq_mhz: f64,
    pub subset: ElectrodeSubset,
    #[serde(default = "default_transport_window")]
    pub window_um: f64,
    #[serde(default = "default_bound")]
    pub bound_v: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shim {
    pub z0_um: f64,
    pub field_v_per_mm: [f64; 3],
    pub subset: ElectrodeSubset,
    /// Treat the field as a stray field to cancel rather than one to produce.
    #[serde(default)]
    pub compensate: bool,
    /// Solve a confining well at this frequency first and keep the sum in range.
    #[serde(default)]
    pub base_freq_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseInference {
    pub rate_ph_s: f64,
    pub freq_mhz: f64,
    /// Electrodes driven together by the noise source.
    pub electrodes: Vec<String>,
    #[serde(default)]
    pub z0_um: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    #[serde(default)]
    pub table: Option<String>,
    #[serde(default)]
    pub resistances_ohm: Vec<f64>,
    #[serde(default)]
    pub temperatures_k: Vec<f64>,
}

fn check_known(layout: &TrapLayout, files: &FileLoader, ids: impl IntoIterator<Item = impl AsRef<str>>) -> Result<()> {
    for id in ids {
        let id = id.as_ref();
        let e = layout.electrode(id).map_err(|e| files.invalid(e.to_string()))?;
        if !e.role().is_dc() {
            return Err(files.invalid(format!("electrode `{id}` is not DC-controlled")));
        }
    }
    Ok(())
}

fn check_positive(files: &FileLoader, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(files.invalid(format!("{name} must be positive, got {v}")))
    }
}

fn check_window(files: &FileLoader, w: [f64; 2]) -> Result<()> {
    if w[0] < w[1] && w.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(files.invalid(format!("window_um must be an increasing pair, got {w:?}")))
    }
}

fn check_subset(layout: &TrapLayout, files: &FileLoader, s: &ElectrodeSubset) -> Result<()> {
    match s {
        ElectrodeSubset::Fixed { ids } => check_known(layout, files, ids),
        ElectrodeSubset::Nearest { count, .. } if *count == 0 => Err(files.invalid("subset count must be > 0")),
        ElectrodeSubset::Nearest { .. } => Ok(()),
    }
}

impl Task {
    pub(crate) fn parse(kind: ScenarioKind, v: &Value, layout: &TrapLayout, files: &mut FileLoader) -> Result<Self> {
        Ok(match kind {
            ScenarioKind::ChargeInjection => {
                let p: ChargeInjection = params(files, kind, v)?;
                check_known(layout, files, p.voltages.iter().map(|(id, _)| id))?;
                check_known(layout, files, [&p.electrode])?;
                if !p.voltages.contains(&p.electrode) {
                    return Err(files.invalid(format!("`{}` needs a voltage to be closed first", p.electrode)));
                }
                check_window(files, p.window_um)?;
                Task::ChargeInjection(p)
            }
            ScenarioKind::FloatingDecay => {
                let mut p: FloatingDecay = params(files, kind, v)?;
                check_known(layout, files, p.voltages.iter().map(|(id, _)| id))?;
                let text = match &p.script {
                    ScriptSource::Inline(s) => s.clone(),
                    ScriptSource::File { path } => files.read(path)?,
                };
                p.commands = parse_script(&text).map_err(|e| files.invalid(format!("script: {e}")))?;
                if !(p.duration_s >= 0.0 && p.duration_s.is_finite()) {
                    return Err(files.invalid("duration_s must be >= 0"));
                }
                if let Some(r) = p.decay_rate_v_per_min {
                    if !(r >= 0.0 && r.is_finite()) {
                        return Err(files.invalid("decay_rate_v_per_min must be >= 0"));
                    }
                }
                check_window(files, p.window_um)?;
                Task::FloatingDecay(p)
            }
            ScenarioKind::CoupledDecay => {
                let p: CoupledDecay = params(files, kind, v)?;
                check_known(layout, files, p.voltages.iter().map(|(id, _)| id))?;
                check_known(layout, files, &p.open)?;
                for id in &p.open {
                    if !p.voltages.contains(id) {
                        return Err(files.invalid(format!("`{id}` must be charged before it is opened")));
                    }
                }
                for s in &p.steps {
                    check_known(layout, files, [&s.electrode])?;
                    if s.v.abs() > 10.0 || !s.v.is_finite() {
                        return Err(files.invalid(format!("step voltage {} V on `{}` exceeds +/-10 V", s.v, s.electrode)));
                    }
                    if !(s.t_s >= 0.0 && s.t_s <= p.duration_s) {
                        return Err(files.invalid(format!("step at t = {} s lies outside the run", s.t_s)));
                    }
                }
                if !(p.duration_s >= 0.0 && p.duration_s.is_finite()) {
                    return Err(files.invalid("duration_s must be >= 0"));
                }
                Task::CoupledDecay(p)
            }
            ScenarioKind::HeatingFit => {
                let p: HeatingFit = params(files, kind, v)?;
                let mut sets = Vec::new();
                for d in &p.datasets {
                    let series = match &d.data {
                        DataSource::Points(points) => MeasurementSeries::new(points.clone()),
                        DataSource::File { path } => {
                            let text = files.read(path)?;
                            MeasurementSeries::from_csv(text.as_bytes())
                        }
                    }
                    .map_err(|e| files.invalid(format!("dataset at x = {}: {e}", d.x)))?;
                    sets.push(Dataset { x: d.x, series });
                }
                if let Some(s) = &p.synthetic {
                    if s.freqs_mhz.is_empty() || s.delays_s.len() < 2 || !(s.sigma > 0.0) {
                        return Err(files.invalid("synthetic data needs frequencies, >= 2 delays and sigma > 0"));
                    }
                }
                if sets.is_empty() && p.synthetic.is_none() {
                    return Err(files.invalid("heating-fit needs datasets or synthetic data"));
                }
                if p.law == FitLaw::Temperature {
                    check_positive(files, "omega_mhz", p.omega_mhz.unwrap_or(f64::NAN))?;
                    if p.synthetic.is_some() {
                        return Err(files.invalid("synthetic data follows the frequency law"));
                    }
                }
                Task::HeatingFit(p, sets)
            }
            ScenarioKind::RefreshBudget => {
                let p: RefreshBudget = params(files, kind, v)?;
                check_positive(files, "clock_hz", p.clock_hz)?;
                check_positive(files, "drift_hz_per_ms", p.drift_hz_per_ms)?;
                Task::RefreshBudget(p)
            }
            ScenarioKind::Transport => {
                let p: Transport = params(files, kind, v)?;
                check_subset(layout, files, &p.subset)?;
                check_positive(files, "step_um", p.step_um)?;
                check_positive(files, "freq_mhz", p.freq_mhz)?;
                check_positive(files, "window_um", p.window_um)?;
                if !(p.bound_v > 0.0 && p.bound_v <= 10.0) {
                    return Err(files.invalid(format!("bound_v must be in (0, 10], got {}", p.bound_v)));
                }
                Task::Transport(p)
            }
            ScenarioKind::Shim => {
                let p: Shim = params(files, kind, v)?;
                check_subset(layout, files, &p.subset)?;
                if let Some(f) = p.base_freq_mhz {
                    check_positive(files, "base_freq_mhz", f)?;
                }
                Task::Shim(p)
            }
            ScenarioKind::NoiseInference => {
                let p: NoiseInference = params(files, kind, v)?;
                check_known(layout, files, &p.electrodes)?;
                check_positive(files, "freq_mhz", p.freq_mhz)?;
                if p.electrodes.is_empty() {
                    return Err(files.invalid("at least one electrode is needed for the field response"));
                }
                Task::NoiseInference(p)
            }
            ScenarioKind::Calibration => {
                let p: Calibration = params(files, kind, v)?;
                let text = match &p.table {
                    Some(path) => files.read(path)?,
                    None => CALIBRATION_TWO_POINT.to_string(),
                };
                let table = CalibrationTable::from_csv(text.as_bytes()).map_err(|e| files.invalid(format!("table: {e}")))?;
                Task::Calibration(p, table)
            }
        })
    }

    pub(crate) fn execute(&self, env: &Prepared) -> Result<Outcome> {
        match self {
            Task::ChargeInjection(p) => charge_injection(env, p),
            Task::FloatingDecay(p) => floating_decay(env, p),
            Task::CoupledDecay(p) => coupled_decay(env, p),
            Task::HeatingFit(p, sets) => heating_fit(env, p, sets),
            Task::RefreshBudget(p) => refresh_budget(p),
            Task::Transport(p) => transport(env, p),
            Task::Shim(p) => shim(env, p),
            Task::NoiseInference(p) => noise_inference(env, p),
            Task::Calibration(p, table) => calibration(p, table),
        }
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| ScenarioError::Model { module: "output", msg: e.to_string() })
}

fn events_csv(events: &[Event]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_events_csv(events, &mut buf)?;
    Ok(buf)
}

fn voltage_map<'a>(v: impl IntoIterator<Item = (&'a str, f64)>) -> Value {
    Value::Object(v.into_iter().map(|(k, x)| (k.to_string(), json!(x))).collect())
}

/// Switch matrix with every electrode of `voltages` charged from its DAC.
fn charged_matrix(env: &Prepared, voltages: &VoltageSet) -> Result<SwitchMatrix> {
    let mut m = SwitchMatrix::for_layout(&env.layout, &env.circuit, WIRING_PERIOD)?;
    let mut assigned: BTreeMap<usize, (String, f64)> = BTreeMap::new();
    let mut cmds = Vec::new();
    for (id, v) in voltages.iter() {
        let dac = match m.route(id)? {
            Route::Single { dac } => dac,
            Route::Dual { a, .. } => a,
        };
        if let Some((other, w)) = assigned.get(&dac) {
            if *w != v {
                return Err(ScenarioError::Model {
                    module: "mux-control",
                    msg: format!("`{id}` and `{other}` share DAC {dac} but ask for {v} V and {w} V"),
                });
            }
        }
        assigned.insert(dac, (id.to_string(), v));
        m.set_dac(dac, v)?;
        cmds.push(Command::Close { electrode: id.to_string(), dac });
    }
    m.run(&cmds)?;
    Ok(m)
}

fn electrode_state(m: &SwitchMatrix) -> Result<VoltageSet> {
    Ok(VoltageSet::from_pairs(m.voltages())?)
}

fn well_or_none(layout: &TrapLayout, v: &VoltageSet, window: [f64; 2]) -> Result<Option<AxialWell>> {
    match layout.axial_well(v, IonSpecies::calcium40(), (window[0], window[1])) {
        Ok(w) => Ok(Some(w)),
        Err(TrapError::NoWell { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn well_json(w: &Option<AxialWell>) -> Value {
    match w {
        Some(w) => json!({"z0_um": w.z0, "freq_mhz": w.freq_mhz(), "depth_ev": w.depth}),
        None => Value::Null,
    }
}

fn charge_injection(env: &Prepared, p: &ChargeInjection) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut m = charged_matrix(env, &p.voltages)?;
    let before = electrode_state(&m)?;
    let w0 = env.layout.axial_well(&before, IonSpecies::calcium40(), (p.window_um[0], p.window_um[1]))?;
    let events = m.apply(&Command::Open { electrode: p.electrode.clone() })?;
    let after = electrode_state(&m)?;
    let w1 = well_or_none(&env.layout, &after, p.window_um)?;
    let node = m.node(&p.electrode)?;
    let v_gate = env.circuit.v_gate(p.voltages.get(&p.electrode));
    out.put("electrode", p.electrode.as_str());
    out.put("v_before", before.get(&p.electrode));
    out.put("v_after", after.get(&p.electrode));
    out.put("delta_v", after.get(&p.electrode) - before.get(&p.electrode));
    out.put("v_gate", v_gate);
    out.put("injection_drop_v", injection_drop(&node.bank, v_gate)?);
    out.put("suppression_with_board_cap", suppression_factor(&node.bank, C_EXT_BOARD)?);
    out.put("well_before", well_json(&Some(w0)));
    out.put("well_after", well_json(&w1));
    if let Some(w1) = w1 {
        out.put("delta_z_um", w1.z0 - w0.z0);
    }
    out.put("event_count", events.len() as u64);
    out.records = events.iter().map(|e| serde_json::to_value(e).unwrap_or(Value::Null)).collect();
    out.warnings = m.warnings().to_vec();
    out.files.push(("events.csv".into(), events_csv(&events)?));
    Ok(out)
}

fn sample_times(duration: f64, samples: usize) -> Vec<f64> {
    if samples == 0 || duration == 0.0 {
        return vec![0.0];
    }
    (0..=samples).map(|k| duration * k as f64 / samples as f64).collect()
}

fn floating_decay(env: &Prepared, p: &FloatingDecay) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut m = charged_matrix(env, &p.voltages)?;
    let initial = electrode_state(&m)?;
    let events = m.run(&p.commands)?;
    if let Some(rate) = p.decay_rate_v_per_min {
        m.calibrate_decay(rate / 60.0)?;
    }
    let mut tracked: BTreeSet<String> = p.voltages.iter().map(|(id, _)| id.to_string()).collect();
    tracked.extend(events.iter().map(|e| e.electrode.clone()));
    let tracked: Vec<String> = tracked.into_iter().collect();

    let times = sample_times(p.duration_s, p.samples);
    if times.len() > 1 {
        m.set_max_step(times[1] - times[0])?;
    }
    let t0 = m.time();
    let mut rows = Vec::new();
    let mut freqs = Vec::new();
    let mut lost_at = None;
    let mut first_well = None;
    let mut last_well = None;
    for &t in &times {
        m.advance(t0 + t - m.time())?;
        let v = electrode_state(&m)?;
        let w = well_or_none(&env.layout, &v, p.window_um)?;
        let mut row = vec![fmt_num(t)];
        row.extend(tracked.iter().map(|id| fmt_num(v.get(id))));
        match &w {
            Some(w) => {
                row.extend([fmt_num(w.z0), fmt_num(w.freq_mhz()), fmt_num(w.depth)]);
                freqs.push(w.freq_mhz());
                first_well.get_or_insert(*w);
                last_well = Some(*w);
            }
            None => {
                row.extend([String::new(), String::new(), String::new()]);
                lost_at.get_or_insert(t);
            }
        }
        rows.push(row);
    }
    let mut header = vec!["t_s".to_string()];
    header.extend(tracked.iter().map(|id| format!("v_{id}")));
    header.extend(["z0_um", "freq_mhz", "depth_ev"].map(String::from));

    let last = electrode_state(&m)?;
    out.put("event_count", events.len() as u64);
    out.put("initial_voltages", voltage_map(tracked.iter().map(|id| (id.as_str(), initial.get(id)))));
    out.put("final_voltages", voltage_map(tracked.iter().map(|id| (id.as_str(), last.get(id)))));
    out.put("duration_s", p.duration_s);
    out.put("well_start", well_json(&first_well));
    out.put("well_end", well_json(&last_well));
    out.put("freq_strictly_decreasing", freqs.len() > 1 && freqs.windows(2).all(|w| w[1] < w[0]));
    out.put("ion_lost_at_s", lost_at.map_or(Value::Null, Value::from));
    out.records = events.iter().map(|e| serde_json::to_value(e).unwrap_or(Value::Null)).collect();
    out.warnings = m.warnings().to_vec();
    out.files.push(("events.csv".into(), events_csv(&events)?));
    out.files.push(("series.csv".into(), csv_bytes(&header, &rows)?));
    Ok(out)
}

fn coupled_decay(env: &Prepared, p: &CoupledDecay) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut m = charged_matrix(env, &p.voltages)?;
    let initial = electrode_state(&m)?;
    let cmds: Vec<Command> = p.open.iter().map(|id| Command::Open { electrode: id.clone() }).collect();
    let events = m.run(&cmds)?;
    let opened = electrode_state(&m)?;
    if let Some(rate) = p.decay_rate_v_per_min {
        m.calibrate_decay(rate / 60.0)?;
    }
    let times = sample_times(p.duration_s, p.samples);
    let mut steps = p.steps.clone();
    steps.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
    let ids: Vec<String> = p.voltages.iter().map(|(id, _)| id.to_string()).collect();
    let t0 = m.time();
    let mut rows = Vec::new();
    let mut next_step = 0;
    for &t in &times {
        while next_step < steps.len() && steps[next_step].t_s <= t {
            let s = &steps[next_step];
            m.advance(t0 + s.t_s - m.time())?;
            let dac = match m.route(&s.electrode)? {
                Route::Single { dac } => dac,
                Route::Dual { a, .. } => a,
            };
            m.set_dac(dac, s.v)?;
            next_step += 1;
        }
        m.advance(t0 + t - m.time())?;
        let v = electrode_state(&m)?;
        let mut row = vec![fmt_num(t)];
        row.extend(ids.iter().map(|id| fmt_num(v.get(id))));
        rows.push(row);
    }
    let mut header = vec!["t_s".to_string()];
    header.extend(ids.iter().map(|id| format!("v_{id}")));
    let last = electrode_state(&m)?;
    out.put("event_count", events.len() as u64);
    out.put("initial_voltages", voltage_map(ids.iter().map(|id| (id.as_str(), initial.get(id)))));
    out.put("final_voltages", voltage_map(ids.iter().map(|id| (id.as_str(), last.get(id)))));
    out.put(
        "floating_shift_v",
        voltage_map(p.open.iter().map(|id| (id.as_str(), last.get(id) - opened.get(id)))),
    );
    out.records = p.steps.iter().map(|s| serde_json::to_value(s).unwrap_or(Value::Null)).collect();
    out.warnings = m.warnings().to_vec();
    out.files.push(("events.csv".into(), events_csv(&events)?));
    out.files.push(("series.csv".into(), csv_bytes(&header, &rows)?));
    Ok(out)
}

fn synthetic_sets(s: &Synthetic, seed: u64) -> Result<Vec<Dataset>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, s.sigma).map_err(|e| ScenarioError::Model { module: "analysis", msg: e.to_string() })?;
    s.freqs_mhz
        .iter()
        .map(|&f| {
            let rate = s.n1 * f.powf(-s.alpha);
            let points = s
                .delays_s
                .iter()
                .map(|&t| MeasurementPoint { delay: t, nbar: s.offset + rate * t + noise.sample(&mut rng), sigma: s.sigma })
                .collect();
            Ok(Dataset { x: f, series: MeasurementSeries::new(points)? })
        })
        .collect()
}

fn fit_json(fit: &FitResult) -> Value {
    let mut m = serde_json::Map::new();
    for ((name, v), s) in fit.names.iter().zip(&fit.values).zip(&fit.sigmas) {
        m.insert(name.clone(), json!(v));
        m.insert(format!("{name}_sigma"), json!(s));
    }
    m.insert("chi2".into(), json!(fit.chi2));
    m.insert("dof".into(), json!(fit.dof));
    Value::Object(m)
}

fn heating_fit(env: &Prepared, p: &HeatingFit, sets: &[Dataset]) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut all = sets.to_vec();
    if let Some(s) = &p.synthetic {
        all.extend(synthetic_sets(s, env.scenario.seed())?);
    }
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for d in &all {
        let fit = heating_rate_fit(&d.series)?;
        let (rate, sigma) = fit.get("rate").unwrap_or((f64::NAN, f64::NAN));
        let x = match p.law {
            FitLaw::Frequency => omega_from_mhz(d.x),
            _ => d.x,
        };
        points.push(RatePoint { x, rate, sigma });
        out.records.push(json!({"x": d.x, "rate": rate, "rate_sigma": sigma, "intercept": fit.value("intercept")}));
        rows.push(vec![fmt_num(d.x), fmt_num(rate), fmt_num(sigma)]);
    }
    out.put("datasets", all.len() as u64);
    match p.law {
        FitLaw::Frequency => {
            out.put("fit", fit_json(&power_law_fit_freq(&points, p.method)?));
        }
        FitLaw::Temperature => {
            let omega = omega_from_mhz(p.omega_mhz.unwrap_or(f64::NAN));
            out.put("fit", fit_json(&power_law_fit_temp(&points, omega, p.method)?));
        }
        FitLaw::RateOnly => {}
    }
    out.put("method", serde_json::to_value(p.method).unwrap_or(Value::Null));
    out.files.push((
        "rates.csv".into(),
        csv_bytes(&["x".into(), "rate_ph_s".into(), "sigma_ph_s".into()], &rows)?,
    ));
    Ok(out)
}

fn refresh_budget(p: &RefreshBudget) -> Result<Outcome> {
    let mut out = Outcome::new();
    let format = FrameFormat { clock_hz: p.clock_hz, ..FrameFormat::default() };
    // the drift is specified directly, so the electrode sensitivity is folded into a unit decay rate
    let omega_dot = 2.0 * PI * p.drift_hz_per_ms * 1e3;
    let inputs = RefreshInputs {
        electrodes: p.electrodes,
        frame_time: format.frame_time(),
        settle_time: p.settle_s,
        error_budget: p.error_budget,
        gate_time: p.gate_time_s,
        freq_sensitivity: omega_dot,
        decay_rate: 1.0,
        min_refresh_hz: p.min_refresh_hz,
    };
    let plan = plan_refresh(&inputs)?;
    out.put("verdict", if plan.feasible { "feasible" } else { "infeasible" });
    out.put("refresh_hz", plan.refresh_hz);
    out.put("cycle_s", plan.cycle_period);
    out.put("service_s", plan.service_time);
    out.put("frame_s", inputs.frame_time);
    out.put("error_per_cycle", plan.error);
    out.put("drift_per_cycle_hz", plan.max_drift_hz);
    out.put("hold_ms", p.hold_ms);
    out.put("error_at_hold", gate_detuning_error(omega_dot, p.hold_ms * 1e-3, p.gate_time_s));
    out.put("binding", plan.binding.clone().map_or(Value::Null, Value::from));
    Ok(out)
}

fn transport(env: &Prepared, p: &Transport) -> Result<Outcome> {
    let mut out = Outcome::new();
    let opts = TransportOptions {
        solve: SolveOptions { bound: p.bound_v, ..SolveOptions::default() },
        window: p.window_um,
    };
    let prof = build_transport(
        &env.layout,
        &IonSpecies::calcium40(),
        (p.start_um, p.end_um),
        p.step_um,
        omega_from_mhz(p.freq_mhz),
        &p.subset,
        &opts,
    )?;
    let freqs: Vec<f64> = prof.points.iter().map(|q| q.achieved.freq_mhz()).collect();
    let fold = |init: f64, f: fn(f64, f64) -> f64, xs: &[f64]| xs.iter().copied().fold(init, f);
    let depths: Vec<f64> = prof.points.iter().map(|q| q.achieved.depth).collect();
    let offsets: Vec<f64> = prof.points.iter().map(|q| (q.achieved.z0 - q.z0).abs()).collect();
    out.put("points", prof.points.len() as u64);
    out.put("max_step_dv", prof.max_step_dv);
    out.put("freq_min_mhz", fold(f64::INFINITY, f64::min, &freqs));
    out.put("freq_max_mhz", fold(f64::NEG_INFINITY, f64::max, &freqs));
    out.put("depth_min_ev", fold(f64::INFINITY, f64::min, &depths));
    out.put("max_position_error_um", fold(0.0, f64::max, &offsets));
    out.put("max_abs_v", prof.points.iter().map(|q| q.voltages.max_abs()).fold(0.0, f64::max));
    let mut buf = Vec::new();
    prof.write_csv(&env.layout, &mut buf)?;
    out.files.push(("profile.csv".into(), buf));
    Ok(out)
}

fn shim(env: &Prepared, p: &Shim) -> Result<Outcome> {
    let mut out = Outcome::new();
    let opts = SolveOptions::default();
    let base = match p.base_freq_mhz {
        Some(f) => Some(solve_well(&env.layout, &IonSpecies::calcium40(), p.z0_um, omega_from_mhz(f), &p.subset, &opts)?.voltages),
        None => None,
    };
    let field = Vector3::from(p.field_v_per_mm);
    let sol = if p.compensate {
        compensate(&env.layout, p.z0_um, field, &p.subset, base.as_ref(), &opts)?
    } else {
        solve_shim(&env.layout, p.z0_um, field, &p.subset, base.as_ref(), &opts)?
    };
    // independent check through the trap model
    let at = env.layout.axis().at(p.z0_um);
    let mut check = Vector3::zeros();
    for (id, v) in sol.delta.iter() {
        check += env.layout.stray_field_response(id, at)? * v * 1e-3;
    }
    out.put("delta", voltage_map(sol.delta.iter()));
    out.put("field_v_per_mm", json!([check.x, check.y, check.z]));
    out.put("at_bound", json!(sol.at_bound));
    if let Some(b) = &base {
        out.put("base", voltage_map(b.iter()));
        out.put("total", voltage_map(b.added(&sol.delta)?.iter()));
    }
    Ok(out)
}

fn noise_inference(env: &Prepared, p: &NoiseInference) -> Result<Outcome> {
    let mut out = Outcome::new();
    let omega = omega_from_mhz(p.freq_mhz);
    let s_e = field_noise_from_heating(p.rate_ph_s, omega, &IonSpecies::calcium40())?;
    let at = env.layout.axis().at(p.z0_um);
    let response = env.layout.common_mode_response(p.electrodes.iter().map(String::as_str), at)?;
    let r = response.norm();
    out.put("s_e_v2_per_m2_hz", s_e);
    out.put("sqrt_s_e_v_per_m_rthz", s_e.sqrt());
    out.put("field_response_per_m", r);
    out.put("voltage_noise_v_rthz", voltage_noise(s_e, r)?);
    Ok(out)
}

fn calibration(p: &Calibration, table: &CalibrationTable) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut t_of_r = serde_json::Map::new();
    for &r in &p.resistances_ohm {
        let t = table.temperature_from_resistance(r)?;
        t_of_r.insert(format!("{r}"), json!(t));
        out.records.push(json!({"r_ohm": r, "t_k": t}));
    }
    let mut r_of_t = serde_json::Map::new();
    for &t in &p.temperatures_k {
        let r = table.resistance_from_temperature(t)?;
        r_of_t.insert(format!("{t}"), json!(r));
        out.records.push(json!({"r_ohm": r, "t_k": t}));
    }
    out.put("temperature_k", Value::Object(t_of_r));
    out.put("resistance_ohm", Value::Object(r_of_t));
    out.put("table_points", table.points().len() as u64);
    Ok(out)
}
