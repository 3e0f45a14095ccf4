use std::f64::consts::PI;

use super::{AnalysisError, Result};
use crate::constants::HBAR;
use crate::IonSpecies;

/// Proportionality constant of the detuning infidelity, fixed so that a
/// 20 Hz detuning over a 500 us gate gives exactly 1e-4.
pub const GATE_ERROR_CONSTANT: f64 = 1e-4 / (REFERENCE_PRODUCT * REFERENCE_PRODUCT);

const REFERENCE_PRODUCT: f64 = 20.0 * 500e-6;

/// Gate infidelity from secular-frequency drift: `K (df T_G)^2` with
/// `df = omega_dot t / 2pi`. `omega_dot` in rad/s^2, times in s.
pub fn gate_detuning_error(omega_dot: f64, hold_time: f64, gate_time: f64) -> f64 {
    let df = omega_dot * hold_time / (2.0 * PI);
    let x = df * gate_time;
    GATE_ERROR_CONSTANT * x * x
}

/// Electric-field noise spectral density (V^2 m^-2 Hz^-1) implied by a heating
/// rate (phonons/s) at secular angular frequency `omega`.
pub fn field_noise_from_heating(rate: f64, omega: f64, species: &IonSpecies) -> Result<f64> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(AnalysisError::Domain(format!("heating rate must be >= 0, got {rate}")));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(AnalysisError::Domain(format!("omega must be > 0, got {omega}")));
    }
    let q = species.charge_c;
    Ok(4.0 * species.mass_kg * HBAR * omega * rate / (q * q))
}

/// Equivalent electrode voltage noise (V/sqrt(Hz)) for a field response (V/m per V).
pub fn voltage_noise(s_e: f64, response: f64) -> Result<f64> {
    if response == 0.0 {
        return Err(AnalysisError::Division("field response is zero".into()));
    }
    Ok(s_e.sqrt() / response.abs())
}
