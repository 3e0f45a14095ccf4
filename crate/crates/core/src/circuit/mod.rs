//! Per-electrode charging circuit: switch charge injection, leakage of
//! floating electrodes, capacitive coupling between neighbours, the RC
//! filter on the DAC lines and the channel gain of the multiplexer.

mod coupling;
mod filter;
mod preset;

pub use coupling::{calibrate_linear_decay, coupled_decay_step, driven_step, CouplingNetwork};
pub use filter::{channel_transfer, filter_response, FilterResponse, FilterSpec};
pub use preset::{CircuitPreset, GateDrive};

use serde::{Deserialize, Serialize};

/// Multiplexer-integrated capacitance on dynamic electrodes (F).
pub const C_INT_DYNAMIC: f64 = 15e-12;
/// Multiplexer-integrated capacitance on shim electrodes (F).
pub const C_INT_SHIM: f64 = 50e-12;
/// Switch parasitic capacitance (F).
pub const C_PARA_DEFAULT: f64 = 1e-12;
/// Board capacitor added per electrode for injection suppression (F).
pub const C_EXT_BOARD: f64 = 39e-9;
/// Largest voltage the DAC channels pass (V).
pub const MAX_CHANNEL_VOLTAGE: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum CircuitError {
    #[error("total capacitance is zero")]
    Degenerate,
    #[error("{0}")]
    Config(String),
    #[error("voltage {volts} V outside the +/-{limit} V channel range")]
    Range { volts: f64, limit: f64 },
    #[error("switch of `{0}` is not closed")]
    NotClosed(String),
    #[error("unknown circuit node `{0}`")]
    UnknownNode(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse circuit preset: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CircuitError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitorBank {
    pub c_ele: f64,
    pub c_int: f64,
    pub c_para: f64,
    pub c_ext: f64,
}

impl CapacitorBank {
    pub fn new(c_ele: f64, c_int: f64, c_para: f64, c_ext: f64) -> Result<Self> {
        for (name, c) in [("c_ele", c_ele), ("c_int", c_int), ("c_para", c_para), ("c_ext", c_ext)] {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(CircuitError::Config(format!("{name} must be >= 0, got {c}")));
            }
        }
        Ok(Self { c_ele, c_int, c_para, c_ext })
    }

    /// C_para + C_ele + C_int + C_ext.
    pub fn total(&self) -> f64 {
        self.c_para + self.c_ele + self.c_int + self.c_ext
    }

    pub fn with_ext(mut self, c_ext: f64) -> Self {
        self.c_ext = c_ext;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchState {
    Closed(String),
    Open,
}

/// How a floating electrode loses charge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law")]
pub enum DecayLaw {
    /// Constant leakage current towards ground.
    Linear,
    /// Resistive leak, `tau = R * sum C`.
    Exponential { leak_resistance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitNode {
    pub id: String,
    pub bank: CapacitorBank,
    pub v: f64,
    pub switch: SwitchState,
    /// Leakage current magnitude (A).
    pub leak: f64,
    pub decay: DecayLaw,
}

impl CircuitNode {
    pub fn new(id: impl Into<String>, bank: CapacitorBank, leak: f64) -> Self {
        Self {
            id: id.into(),
            bank,
            v: 0.0,
            switch: SwitchState::Open,
            leak,
            decay: DecayLaw::Linear,
        }
    }

    pub fn is_open(&self) -> bool {
        self.switch == SwitchState::Open
    }

    /// Connect to `dac` and charge to `v_dac`.
    pub fn close(&mut self, dac: impl Into<String>, v_dac: f64) -> Result<()> {
        check_range(v_dac)?;
        self.switch = SwitchState::Closed(dac.into());
        self.v = v_dac;
        Ok(())
    }

    /// Open the switch, applying the charge-injection drop. Returns the new voltage.
    pub fn open(&mut self, v_gate: f64) -> Result<f64> {
        if self.is_open() {
            return Err(CircuitError::NotClosed(self.id.clone()));
        }
        self.v = charge_injection(&self.bank, self.v, v_gate)?;
        self.switch = SwitchState::Open;
        Ok(self.v)
    }

    /// Voltage decay rate magnitude for the linear law (V/s).
    pub fn decay_rate(&self) -> f64 {
        self.leak / self.bank.total()
    }
}

pub(crate) fn check_range(v: f64) -> Result<()> {
    if v.abs() <= MAX_CHANNEL_VOLTAGE {
        Ok(())
    } else {
        Err(CircuitError::Range { volts: v, limit: MAX_CHANNEL_VOLTAGE })
    }
}

/// Electrode voltage after the switch opens, from charge sharing with the
/// switch parasitic when the gate swings by `v_gate`.
pub fn charge_injection(bank: &CapacitorBank, v_dac: f64, v_gate: f64) -> Result<f64> {
    let total = bank.total();
    if total == 0.0 {
        return Err(CircuitError::Degenerate);
    }
    let held = bank.c_ele + bank.c_int + bank.c_ext;
    Ok((v_dac * held + (v_dac - v_gate) * bank.c_para) / total)
}

/// Size of the injection drop, `v_gate * C_para / sum C`.
pub fn injection_drop(bank: &CapacitorBank, v_gate: f64) -> Result<f64> {
    let total = bank.total();
    if total == 0.0 {
        return Err(CircuitError::Degenerate);
    }
    Ok(v_gate * bank.c_para / total)
}

/// Ratio of the drop without and with the board capacitor `c_ext`.
pub fn suppression_factor(bank: &CapacitorBank, c_ext: f64) -> Result<f64> {
    let gate = 1.0;
    Ok(injection_drop(&bank.with_ext(0.0), gate)? / injection_drop(&bank.with_ext(c_ext), gate)?)
}

/// Voltage of a floating node after `dt` seconds. Closed nodes are held by their DAC.
pub fn leakage_decay(node: &CircuitNode, dt: f64) -> f64 {
    if !node.is_open() || dt == 0.0 {
        return node.v;
    }
    match node.decay {
        DecayLaw::Linear => {
            let mag = (node.v.abs() - node.decay_rate() * dt).max(0.0);
            mag.copysign(node.v)
        }
        DecayLaw::Exponential { leak_resistance } => {
            node.v * (-dt / (leak_resistance * node.bank.total())).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> CapacitorBank {
        CapacitorBank::new(0.0, 50e-12, 1e-12, 0.0).unwrap()
    }

    #[test]
    fn zero_gate_swing_keeps_voltage() {
        assert_eq!(charge_injection(&bank(), 2.67, 0.0).unwrap(), 2.67);
    }

    #[test]
    fn degenerate_bank() {
        let b = CapacitorBank::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(charge_injection(&b, 1.0, 1.0), Err(CircuitError::Degenerate)));
        assert!(CapacitorBank::new(-1e-12, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn decay_rate_from_leak_current() {
        let mut n = CircuitNode::new("e", bank().with_ext(0.0), 23.5e-15);
        n.bank.c_para = 0.0;
        n.v = 5.0;
        let dv = n.v - leakage_decay(&n, 1.0);
        assert!((dv - 0.47e-3).abs() < 1e-12);
    }

    #[test]
    fn decay_stops_at_ground_and_keeps_sign() {
        let mut n = CircuitNode::new("e", bank(), 1e-12);
        n.v = -0.01;
        assert_eq!(leakage_decay(&n, 1e3), 0.0);
        n.v = -2.0;
        assert!(leakage_decay(&n, 1.0) > -2.0);
        n.switch = SwitchState::Closed("dac0".into());
        assert_eq!(leakage_decay(&n, 1.0), -2.0);
    }

    #[test]
    fn exponential_law() {
        let mut n = CircuitNode::new("e", bank(), 0.0);
        n.decay = DecayLaw::Exponential { leak_resistance: 1e12 };
        n.v = 1.0;
        let tau = 1e12 * bank().total();
        assert!((leakage_decay(&n, tau) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn open_requires_closed_switch() {
        let mut n = CircuitNode::new("e", bank(), 0.0);
        assert!(n.open(1.0).is_err());
        n.close("dac0", 2.0).unwrap();
        assert!(n.close("dac0", 11.0).is_err());
        let v = n.open(5.1).unwrap();
        assert!((2.0 - v - 0.1).abs() < 1e-12);
        assert!(n.is_open());
    }
}
