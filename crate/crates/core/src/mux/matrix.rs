use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::frame::{Frame, FrameFormat, Opcode};
use super::MuxError;
use crate::circuit::{
    channel_transfer, calibrate_linear_decay, coupled_decay_step, driven_step, CircuitNode, CircuitPreset, CouplingNetwork,
    GateDrive, SwitchState,
};
use crate::trap::{ElectrodeRole, TrapLayout};

/// Commands below this ASIC temperature are flagged for switching transients.
pub const MIN_CLEAN_TEMPERATURE_K: f64 = 70.0;

/// DAC sources an output can be switched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Dynamic electrode: waveform bank A or hold bank B.
    Dual { a: usize, b: usize },
    /// Shim or inner electrode on a single (possibly shared) DAC.
    Single { dac: usize },
}

impl Route {
    fn reaches(&self, dac: usize) -> bool {
        match *self {
            Route::Dual { a, b } => dac == a || dac == b,
            Route::Single { dac: d } => dac == d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bank {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "op")]
pub enum Command {
    Close { electrode: String, dac: usize },
    Open { electrode: String },
    Bank { electrode: String, bank: Bank },
    Wait { ms: f64 },
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Close { electrode, dac } => write!(f, "close {electrode} {dac}"),
            Command::Open { electrode } => write!(f, "open {electrode}"),
            Command::Bank { electrode, bank } => write!(f, "bank {electrode} {bank:?}"),
            Command::Wait { ms } => write!(f, "wait {ms}"),
        }
    }
}

/// Parse a line-oriented command script. Blank lines and `#` comments are skipped.
pub fn parse_script(text: &str) -> Result<Vec<Command>, MuxError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| MuxError::Parse { line: n + 1, msg };
        let tok: Vec<&str> = line.split_whitespace().collect();
        let cmd = match (tok[0], tok.len()) {
            ("close", 3) => {
                let dac = tok[2].strip_prefix("dac").unwrap_or(tok[2]);
                let dac = dac.parse().map_err(|_| err(format!("bad DAC `{}`", tok[2])))?;
                Command::Close { electrode: tok[1].into(), dac }
            }
            ("open", 2) => Command::Open { electrode: tok[1].into() },
            ("bank", 3) => {
                let bank = match tok[2] {
                    "A" | "a" => Bank::A,
                    "B" | "b" => Bank::B,
                    other => return Err(err(format!("bank must be A or B, got `{other}`"))),
                };
                Command::Bank { electrode: tok[1].into(), bank }
            }
            ("wait", 2) => {
                let ms: f64 = tok[1].parse().map_err(|_| err(format!("bad wait `{}`", tok[1])))?;
                if !(ms >= 0.0 && ms.is_finite()) {
                    return Err(err(format!("wait must be >= 0 ms, got {ms}")));
                }
                Command::Wait { ms }
            }
            _ => return Err(err(format!("unrecognised command `{line}`"))),
        };
        out.push(cmd);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Injection,
    Reconnect,
    BankSwitch,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Injection => "injection",
            EventKind::Reconnect => "reconnect",
            EventKind::BankSwitch => "bank-switch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_s: f64,
    pub electrode: String,
    pub kind: EventKind,
    pub v_before: f64,
    pub v_after: f64,
}

/// Write events as CSV: `time_s,electrode,event,v_before,v_after`.
pub fn write_events_csv<W: Write>(events: &[Event], w: W) -> Result<(), MuxError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["time_s", "electrode", "event", "v_before", "v_after"])?;
    for e in events {
        wr.write_record([
            crate::scenario::fmt_num(e.time_s),
            e.electrode.clone(),
            e.kind.as_str().to_string(),
            crate::scenario::fmt_num(e.v_before),
            crate::scenario::fmt_num(e.v_after),
        ])?;
    }
    wr.flush().map_err(|e| MuxError::Io(e.to_string()))?;
    Ok(())
}

/// Switch matrix together with the circuit state of every output.
#[derive(Debug, Clone)]
pub struct SwitchMatrix {
    format: FrameFormat,
    nodes: Vec<CircuitNode>,
    routes: Vec<Route>,
    index: BTreeMap<String, usize>,
    dac: Vec<f64>,
    gate: GateDrive,
    gain: f64,
    coupling: CouplingNetwork,
    time: f64,
    temperature_k: f64,
    max_step: f64,
    warnings: Vec<String>,
    log: Vec<Event>,
}

impl SwitchMatrix {
    pub fn new(
        nodes: Vec<CircuitNode>,
        routes: Vec<Route>,
        dac_count: usize,
        preset: &CircuitPreset,
    ) -> Result<Self, MuxError> {
        if nodes.len() != routes.len() {
            return Err(MuxError::Config("one route per node required".into()));
        }
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(MuxError::Config(format!("duplicate output `{}`", n.id)));
            }
        }
        for r in &routes {
            let max = match *r {
                Route::Dual { a, b } => a.max(b),
                Route::Single { dac } => dac,
            };
            if max >= dac_count {
                return Err(MuxError::Config(format!("route to DAC {max} but only {dac_count} DACs")));
            }
        }
        let format = FrameFormat {
            electrode_count: nodes.len() as u32,
            ..FrameFormat::default()
        };
        let mut m = Self {
            format,
            nodes,
            routes,
            index,
            dac: vec![0.0; dac_count],
            gate: preset.gate,
            gain: preset.gain,
            coupling: preset.coupling.clone(),
            time: 0.0,
            temperature_k: 77.0,
            max_step: 1e-3,
            warnings: Vec::new(),
            log: Vec::new(),
        };
        m.set_format(format)?;
        Ok(m)
    }

    /// Wire every DC electrode of `layout`. Dynamic electrodes are co-wired by
    /// axial slot with the given period onto banks A (`0..period`) and B
    /// (`period..2 period`); all shims share the next DAC; remaining DC
    /// electrodes get one DAC each. Layouts without dynamic electrodes give
    /// every DC electrode its own DAC.
    pub fn for_layout(layout: &TrapLayout, preset: &CircuitPreset, period: usize) -> Result<Self, MuxError> {
        let nodes = preset.nodes_for(layout)?;
        let dc: Vec<_> = layout.electrodes().iter().filter(|e| e.role().is_dc()).collect();
        let has_dynamic = dc.iter().any(|e| e.role() == ElectrodeRole::DcDynamic);
        let mut routes = vec![Route::Single { dac: 0 }; dc.len()];
        let mut next = 0;
        if has_dynamic {
            if period == 0 {
                return Err(MuxError::Config("co-wiring period must be > 0".into()));
            }
            for row_sign in [1.0, -1.0] {
                let mut row: Vec<usize> = (0..dc.len())
                    .filter(|&i| {
                        let r = dc[i].rects()[0];
                        dc[i].role() == ElectrodeRole::DcDynamic && r.center().1 * row_sign > 0.0
                    })
                    .collect();
                row.sort_by(|&a, &b| dc[a].axial_center().total_cmp(&dc[b].axial_center()));
                for (slot, i) in row.into_iter().enumerate() {
                    routes[i] = Route::Dual { a: slot % period, b: period + slot % period };
                }
            }
            next = 2 * period;
            let shim_dac = next;
            let mut any_shim = false;
            for (i, e) in dc.iter().enumerate() {
                if e.role() == ElectrodeRole::Shim {
                    routes[i] = Route::Single { dac: shim_dac };
                    any_shim = true;
                }
            }
            if any_shim {
                next += 1;
            }
            for (i, e) in dc.iter().enumerate() {
                if e.role() == ElectrodeRole::DcInner {
                    routes[i] = Route::Single { dac: next };
                    next += 1;
                }
            }
        } else {
            for r in routes.iter_mut() {
                *r = Route::Single { dac: next };
                next += 1;
            }
        }
        Self::new(nodes, routes, next.max(1), preset)
    }

    pub fn set_format(&mut self, format: FrameFormat) -> Result<(), MuxError> {
        let format = FrameFormat {
            electrode_count: self.nodes.len() as u32,
            ..format
        };
        format.validate()?;
        self.format = format;
        Ok(())
    }

    pub fn format(&self) -> &FrameFormat {
        &self.format
    }

    pub fn set_temperature(&mut self, kelvin: f64) {
        self.temperature_k = kelvin;
    }

    pub fn set_max_step(&mut self, dt: f64) -> Result<(), MuxError> {
        if !(dt > 0.0) {
            return Err(MuxError::Config("integration step must be > 0".into()));
        }
        self.max_step = dt;
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn nodes(&self) -> &[CircuitNode] {
        &self.nodes
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn dac_count(&self) -> usize {
        self.dac.len()
    }

    fn pos(&self, id: &str) -> Result<usize, MuxError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| MuxError::UnknownElectrode(id.to_string()))
    }

    pub fn node(&self, id: &str) -> Result<&CircuitNode, MuxError> {
        Ok(&self.nodes[self.pos(id)?])
    }

    pub fn node_mut(&mut self, id: &str) -> Result<&mut CircuitNode, MuxError> {
        let i = self.pos(id)?;
        Ok(&mut self.nodes[i])
    }

    pub fn route(&self, id: &str) -> Result<Route, MuxError> {
        Ok(self.routes[self.pos(id)?])
    }

    pub fn address(&self, id: &str) -> Result<u32, MuxError> {
        Ok(self.pos(id)? as u32)
    }

    pub fn dac(&self, i: usize) -> Result<f64, MuxError> {
        self.dac
            .get(i)
            .copied()
            .ok_or_else(|| MuxError::Config(format!("no DAC {i}")))
    }

    /// Set a DAC output; electrodes currently connected to it follow.
    pub fn set_dac(&mut self, i: usize, v: f64) -> Result<(), MuxError> {
        crate::circuit::channel_transfer(v, 1.0)?;
        *self
            .dac
            .get_mut(i)
            .ok_or_else(|| MuxError::Config(format!("no DAC {i}")))? = v;
        let tag = dac_tag(i);
        let changes: BTreeMap<String, f64> = self
            .nodes
            .iter()
            .filter(|n| n.switch == SwitchState::Closed(tag.clone()))
            .map(|n| (n.id.clone(), v))
            .collect();
        driven_step(&mut self.nodes, &self.coupling, &changes)?;
        Ok(())
    }

    /// Frames clocked out for a command.
    pub fn frames_for(&self, cmd: &Command) -> Result<Vec<Frame>, MuxError> {
        let f = |id: &str, opcode| -> Result<Frame, MuxError> { Ok(Frame { address: self.address(id)?, opcode }) };
        Ok(match cmd {
            Command::Close { electrode, .. } => vec![f(electrode, Opcode::Close)?],
            Command::Open { electrode } => vec![f(electrode, Opcode::Open)?],
            Command::Bank { electrode, .. } => {
                let mut v = vec![f(electrode, Opcode::SelectBank)?];
                if self.node(electrode)?.is_open() {
                    v.push(f(electrode, Opcode::Close)?);
                }
                v
            }
            Command::Wait { .. } => Vec::new(),
        })
    }

    /// Let floating electrodes decay for `dt` seconds.
    pub fn advance(&mut self, dt: f64) -> Result<(), MuxError> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(MuxError::Config(format!("cannot advance by {dt} s")));
        }
        let coupled = self
            .nodes
            .iter()
            .any(|n| n.is_open() && self.coupling.total_coupling(&n.id) > 0.0);
        if !coupled {
            coupled_decay_step(&mut self.nodes, &self.coupling, dt)?;
        } else {
            let steps = (dt / self.max_step).ceil().max(1.0) as usize;
            let h = dt / steps as f64;
            for _ in 0..steps {
                coupled_decay_step(&mut self.nodes, &self.coupling, h)?;
            }
        }
        self.time += dt;
        Ok(())
    }

    /// Apply one command. Returns the circuit events it caused, one per state change.
    pub fn apply(&mut self, cmd: &Command) -> Result<Vec<Event>, MuxError> {
        if let Command::Wait { ms } = cmd {
            self.advance(ms * 1e-3)?;
            return Ok(Vec::new());
        }
        let frames = self.frames_for(cmd)?;
        if self.temperature_k < MIN_CLEAN_TEMPERATURE_K {
            self.warnings.push(format!(
                "t={:.6} s: `{cmd}` issued at {} K, below {} K; switching transients not modelled",
                self.time, self.temperature_k, MIN_CLEAN_TEMPERATURE_K
            ));
        }
        self.advance(frames.len() as f64 * self.format.frame_time())?;
        let events = match cmd {
            Command::Close { electrode, dac } => {
                let i = self.pos(electrode)?;
                if !self.routes[i].reaches(*dac) {
                    return Err(MuxError::IllegalTransition(format!(
                        "`{electrode}` is not wired to DAC {dac}"
                    )));
                }
                self.connect(i, *dac, EventKind::Reconnect)?
            }
            Command::Open { electrode } => {
                let i = self.pos(electrode)?;
                let n = &mut self.nodes[i];
                if n.is_open() {
                    Vec::new()
                } else {
                    let before = n.v;
                    let v_gate = self.gate.v_gate(before);
                    let after = n.open(v_gate)?;
                    vec![Event {
                        time_s: self.time,
                        electrode: electrode.clone(),
                        kind: EventKind::Injection,
                        v_before: before,
                        v_after: after,
                    }]
                }
            }
            Command::Bank { electrode, bank } => {
                let i = self.pos(electrode)?;
                let Route::Dual { a, b } = self.routes[i] else {
                    return Err(MuxError::IllegalTransition(format!(
                        "`{electrode}` has no bank selection"
                    )));
                };
                let target = if *bank == Bank::A { a } else { b };
                let kind = if self.nodes[i].is_open() {
                    EventKind::Reconnect
                } else {
                    EventKind::BankSwitch
                };
                if kind == EventKind::BankSwitch && self.nodes[i].switch != SwitchState::Closed(dac_tag(target)) {
                    self.nodes[i].switch = SwitchState::Open;
                }
                self.connect(i, target, kind)?
            }
            Command::Wait { .. } => unreachable!(),
        };
        self.log.extend(events.iter().cloned());
        Ok(events)
    }

    fn connect(&mut self, i: usize, dac: usize, kind: EventKind) -> Result<Vec<Event>, MuxError> {
        let tag = dac_tag(dac);
        match &self.nodes[i].switch {
            SwitchState::Closed(d) if *d == tag => return Ok(Vec::new()),
            SwitchState::Closed(d) => {
                return Err(MuxError::IllegalTransition(format!(
                    "`{}` is closed to {d}; open it before connecting {tag}",
                    self.nodes[i].id
                )))
            }
            SwitchState::Open => {}
        }
        let v = self.dac[dac];
        let before = self.nodes[i].v;
        self.nodes[i].switch = SwitchState::Closed(tag);
        let id = self.nodes[i].id.clone();
        driven_step(&mut self.nodes, &self.coupling, &BTreeMap::from([(id.clone(), v)]))?;
        Ok(vec![Event {
            time_s: self.time,
            electrode: id,
            kind,
            v_before: before,
            v_after: self.nodes[i].v,
        }])
    }

    /// Run a whole script, returning all events.
    pub fn run(&mut self, cmds: &[Command]) -> Result<Vec<Event>, MuxError> {
        let mut all = Vec::new();
        for c in cmds {
            all.extend(self.apply(c)?);
        }
        Ok(all)
    }

    /// Give every floating electrode the leakage that makes it decay at `rate` V/s.
    pub fn calibrate_decay(&mut self, rate: f64) -> Result<(), MuxError> {
        calibrate_linear_decay(&mut self.nodes, &self.coupling, rate)?;
        Ok(())
    }

    pub fn coupling(&self) -> &CouplingNetwork {
        &self.coupling
    }

    /// Voltage seen on the debug output for electrode `id`.
    pub fn debug_readback(&self, id: &str) -> Result<f64, MuxError> {
        Ok(channel_transfer(self.node(id)?.v, self.gain)?)
    }

    pub fn voltages(&self) -> BTreeMap<String, f64> {
        self.nodes.iter().map(|n| (n.id.clone(), n.v)).collect()
    }
}

pub fn dac_tag(i: usize) -> String {
    format!("dac{i}")
}
