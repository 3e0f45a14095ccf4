use serde::{Deserialize, Serialize};

use super::MuxError;
use crate::analysis::gate_detuning_error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefreshInputs {
    pub electrodes: usize,
    /// One command frame (s).
    pub frame_time: f64,
    /// DAC and filter settling per electrode (s).
    pub settle_time: f64,
    /// Largest tolerated gate detuning infidelity.
    pub error_budget: f64,
    /// Two-qubit gate duration (s).
    pub gate_time: f64,
    /// Axial frequency change per volt of electrode drift (rad/s per V).
    pub freq_sensitivity: f64,
    /// Voltage decay rate of a floating electrode (V/s).
    pub decay_rate: f64,
    /// Minimum refresh frequency required regardless of the error budget (Hz).
    pub min_refresh_hz: f64,
}

impl RefreshInputs {
    /// Axial frequency drift rate (rad/s^2).
    pub fn omega_dot(&self) -> f64 {
        self.freq_sensitivity * self.decay_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshSchedule {
    /// Round-robin service order (output positions).
    pub order: Vec<usize>,
    pub service_time: f64,
    pub cycle_period: f64,
    pub refresh_hz: f64,
    /// Frequency drift accumulated over one hold period (Hz).
    pub max_drift_hz: f64,
    pub error: f64,
    pub feasible: bool,
    /// Constraint that makes the plan infeasible, if any.
    pub binding: Option<String>,
}

pub fn plan_refresh(inp: &RefreshInputs) -> Result<RefreshSchedule, MuxError> {
    let positive = [
        ("frame_time", inp.frame_time),
        ("settle_time", inp.settle_time),
        ("error_budget", inp.error_budget),
        ("gate_time", inp.gate_time),
        ("freq_sensitivity", inp.freq_sensitivity),
        ("decay_rate", inp.decay_rate),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(MuxError::Config(format!("{name} must be > 0, got {v}")));
        }
    }
    if inp.electrodes == 0 {
        return Err(MuxError::Config("at least one electrode must be refreshed".into()));
    }
    if !(inp.min_refresh_hz >= 0.0) {
        return Err(MuxError::Config("min_refresh_hz must be >= 0".into()));
    }
    let service = 2.0 * inp.frame_time + inp.settle_time;
    let cycle = inp.electrodes as f64 * service;
    let refresh = 1.0 / cycle;
    let omega_dot = inp.omega_dot();
    let drift = omega_dot * cycle / (2.0 * std::f64::consts::PI);
    let error = gate_detuning_error(omega_dot, cycle, inp.gate_time);
    let binding = if error > inp.error_budget {
        Some(format!(
            "gate detuning error {error:.3e} exceeds budget {:.3e} at hold time {cycle:.3e} s",
            inp.error_budget
        ))
    } else if refresh < inp.min_refresh_hz {
        Some(format!(
            "refresh {refresh:.3} Hz below required {:.3} Hz",
            inp.min_refresh_hz
        ))
    } else {
        None
    };
    Ok(RefreshSchedule {
        order: (0..inp.electrodes).collect(),
        service_time: service,
        cycle_period: cycle,
        refresh_hz: refresh,
        max_drift_hz: drift,
        error,
        feasible: binding.is_none(),
        binding,
    })
}
