use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_range, CircuitError, Result};

/// First-order RC low-pass on a DAC line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub r: f64,
    pub c: f64,
}

impl FilterSpec {
    pub fn new(r: f64, c: f64) -> Result<Self> {
        if !(r > 0.0 && c > 0.0 && r.is_finite() && c.is_finite()) {
            return Err(CircuitError::Config(format!("filter needs R > 0 and C > 0, got {r}, {c}")));
        }
        Ok(Self { r, c })
    }

    /// 250 Ohm / 33 nF board filter.
    pub fn board() -> Self {
        Self { r: 250.0, c: 33e-9 }
    }

    pub fn tau(&self) -> f64 {
        self.r * self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterResponse {
    pub cutoff_hz: f64,
    pub tau: f64,
}

impl FilterResponse {
    /// Time for a step to settle to within fraction `eps` of its final value.
    pub fn settle_time(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(CircuitError::Config(format!("settle fraction must be in (0, 1], got {eps}")));
        }
        Ok(self.tau * (1.0 / eps).ln())
    }
}

pub fn filter_response(f: &FilterSpec) -> FilterResponse {
    let tau = f.tau();
    FilterResponse {
        cutoff_hz: 1.0 / (2.0 * PI * tau),
        tau,
    }
}

/// Voltage delivered through a multiplexer channel with the given gain.
pub fn channel_transfer(v_in: f64, gain: f64) -> Result<f64> {
    check_range(v_in)?;
    Ok(gain * v_in)
}
