use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CapacitorBank, CircuitError, CircuitNode, CouplingNetwork, DecayLaw, Result};
use crate::trap::{ElectrodeRole, TrapLayout};

const PRESETS: &[(&str, &str)] = &[
    ("trap1", include_str!("../../presets/circuit_trap1.json")),
    ("trap2", include_str!("../../presets/circuit_trap2.json")),
];

/// Switch gate swing seen by the parasitic, optionally affine in the DAC voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDrive {
    pub offset_v: f64,
    #[serde(default)]
    pub slope: f64,
}

impl GateDrive {
    pub fn constant(v: f64) -> Self {
        Self { offset_v: v, slope: 0.0 }
    }

    pub fn v_gate(&self, v_dac: f64) -> f64 {
        self.offset_v + self.slope * v_dac
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_ele_pf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_int_pf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leak_fa: Option<f64>,
}

/// Capacitances, leakage, gate drive, channel gain and coupling for one setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitPreset {
    pub name: String,
    pub c_ele_pf: f64,
    /// Integrated capacitance by electrode role.
    pub c_int_pf: BTreeMap<ElectrodeRole, f64>,
    pub c_para_pf: f64,
    pub c_ext_pf: f64,
    pub leak_fa: f64,
    pub gate: GateDrive,
    pub gain: f64,
    pub decay: DecayLaw,
    #[serde(default)]
    pub overrides: BTreeMap<String, NodeOverride>,
    #[serde(default = "CouplingNetwork::empty")]
    pub coupling: CouplingNetwork,
}

impl CircuitPreset {
    pub fn preset(name: &str) -> Result<Self> {
        let (_, json) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| CircuitError::Config(format!("unknown circuit preset `{name}`")))?;
        Self::from_json_str(json)
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|source| CircuitError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&s)
    }

    fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let scalars = [self.c_ele_pf, self.c_para_pf, self.c_ext_pf, self.leak_fa];
        if !scalars.iter().all(|&v| finite_nonneg(v)) || !self.c_int_pf.values().all(|&v| finite_nonneg(v)) {
            return Err(CircuitError::Config(format!(
                "circuit preset `{}`: capacitances and leakage must be >= 0",
                self.name
            )));
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(CircuitError::Config(format!("channel gain must be > 0, got {}", self.gain)));
        }
        if let DecayLaw::Exponential { leak_resistance } = self.decay {
            if !(leak_resistance > 0.0) {
                return Err(CircuitError::Config("leak resistance must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn bank(&self, id: &str, role: ElectrodeRole) -> Result<CapacitorBank> {
        let o = self.overrides.get(id).cloned().unwrap_or_default();
        let c_int = match o.c_int_pf {
            Some(c) => c,
            None => *self.c_int_pf.get(&role).ok_or_else(|| {
                CircuitError::Config(format!("no integrated capacitance for role {role:?}"))
            })?,
        };
        CapacitorBank::new(
            o.c_ele_pf.unwrap_or(self.c_ele_pf) * 1e-12,
            c_int * 1e-12,
            self.c_para_pf * 1e-12,
            self.c_ext_pf * 1e-12,
        )
    }

    pub fn node(&self, id: &str, role: ElectrodeRole) -> Result<CircuitNode> {
        let leak = self
            .overrides
            .get(id)
            .and_then(|o| o.leak_fa)
            .unwrap_or(self.leak_fa)
            * 1e-15;
        let mut n = CircuitNode::new(id, self.bank(id, role)?, leak);
        n.decay = self.decay;
        Ok(n)
    }

    /// One open node per DC electrode of `layout`, in layout order.
    pub fn nodes_for(&self, layout: &TrapLayout) -> Result<Vec<CircuitNode>> {
        layout
            .electrodes()
            .iter()
            .filter(|e| e.role().is_dc())
            .map(|e| self.node(e.id(), e.role()))
            .collect()
    }

    pub fn v_gate(&self, v_dac: f64) -> f64 {
        self.gate.v_gate(v_dac)
    }
}
