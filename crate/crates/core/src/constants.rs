//! Physical constants (CODATA 2018, SI) and unit helpers.

use std::f64::consts::PI;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Metres per micrometre.
pub const UM: f64 = 1e-6;

/// Angular frequency (rad/s) for a frequency given in MHz.
pub fn omega_from_mhz(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e6
}

/// Frequency in MHz for an angular frequency in rad/s.
pub fn mhz_from_omega(omega: f64) -> f64 {
    omega / (2.0 * PI) / 1e6
}
