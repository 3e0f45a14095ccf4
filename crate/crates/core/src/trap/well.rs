use serde::{Deserialize, Serialize};

use super::{IonSpecies, TrapError};
use crate::constants::ELEMENTARY_CHARGE;

/// Electrostatic potential along a line: value (V), slope (V/um) and curvature (V/um^2).
pub trait AxialPotential {
    fn eval(&self, s: f64) -> Result<(f64, f64, f64), TrapError>;
}

impl<F> AxialPotential for F
where
    F: Fn(f64) -> (f64, f64, f64),
{
    fn eval(&self, s: f64) -> Result<(f64, f64, f64), TrapError> {
        Ok(self(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialWell {
    /// Equilibrium position (um).
    pub z0: f64,
    /// Axial secular angular frequency (rad/s).
    pub omega_ax: f64,
    /// Barrier to the lower of the two axial escape points (eV).
    pub depth: f64,
}

impl AxialWell {
    pub fn freq_mhz(&self) -> f64 {
        crate::constants::mhz_from_omega(self.omega_ax)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellOptions {
    /// Grid points used to bracket minima.
    pub samples: usize,
    /// Position tolerance of the Newton polish (um).
    pub tol: f64,
    /// Wells softer than this (rad/s) are reported as no well.
    pub min_omega: f64,
    /// Candidate minima tried, lowest first.
    pub max_candidates: usize,
}

impl Default for WellOptions {
    fn default() -> Self {
        Self {
            samples: 401,
            tol: 1e-9,
            min_omega: 2.0 * std::f64::consts::PI * 1e3,
            max_candidates: 8,
        }
    }
}

/// Locate the lowest confining minimum of `profile` within `interval`.
pub fn solve_axial_well<P: AxialPotential + ?Sized>(
    profile: &P,
    species: &IonSpecies,
    interval: (f64, f64),
    opts: &WellOptions,
) -> Result<AxialWell, TrapError> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(TrapError::Config(format!("bad search interval [{lo}, {hi}]")));
    }
    if opts.samples < 3 {
        return Err(TrapError::Config("well search needs at least 3 samples".into()));
    }
    // energy per volt, in eV
    let qe = species.charge_c / ELEMENTARY_CHARGE;
    let n = opts.samples;
    let grid: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let energy: Vec<f64> = grid
        .iter()
        .map(|&s| profile.eval(s).map(|(v, _, _)| qe * v))
        .collect::<Result<_, _>>()?;

    let mut candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| energy[i] <= energy[i - 1] && energy[i] < energy[i + 1])
        .collect();
    candidates.sort_by(|&a, &b| energy[a].total_cmp(&energy[b]).then(a.cmp(&b)));

    for &i in candidates.iter().take(opts.max_candidates) {
        let Some(z0) = polish(profile, qe, grid[i - 1], grid[i + 1], grid[i], opts.tol)? else {
            continue;
        };
        let (v0, _, curv) = profile.eval(z0)?;
        let k = qe * curv;
        if !(k > 0.0) {
            continue;
        }
        let omega = (species.charge_c * curv * 1e12 / species.mass_kg).sqrt();
        if !(omega >= opts.min_omega) {
            continue;
        }
        let e0 = qe * v0;
        let left = grid
            .iter()
            .zip(&energy)
            .filter(|(s, _)| **s <= z0)
            .map(|(_, e)| *e)
            .fold(f64::NEG_INFINITY, f64::max);
        let right = grid
            .iter()
            .zip(&energy)
            .filter(|(s, _)| **s >= z0)
            .map(|(_, e)| *e)
            .fold(f64::NEG_INFINITY, f64::max);
        let depth = (left.min(right) - e0).max(0.0);
        return Ok(AxialWell {
            z0,
            omega_ax: omega,
            depth,
        });
    }
    Err(TrapError::NoWell { lo, hi })
}

/// Safeguarded Newton on the energy slope inside `[a, b]`.
fn polish<P: AxialPotential + ?Sized>(
    profile: &P,
    qe: f64,
    mut a: f64,
    mut b: f64,
    start: f64,
    tol: f64,
) -> Result<Option<f64>, TrapError> {
    let slope = |s: f64| profile.eval(s).map(|(_, d, c)| (qe * d, qe * c));
    let (fa, _) = slope(a)?;
    let (fb, _) = slope(b)?;
    if fa == 0.0 {
        return Ok(Some(a));
    }
    if fb == 0.0 {
        return Ok(Some(b));
    }
    if !(fa < 0.0 && fb > 0.0) {
        return Ok(None);
    }
    let mut s = start;
    for _ in 0..200 {
        let (f, c) = slope(s)?;
        if f == 0.0 {
            return Ok(Some(s));
        }
        if f < 0.0 {
            a = s;
        } else {
            b = s;
        }
        let newton = s - f / c;
        let next = if c > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        let step = (next - s).abs();
        s = next;
        if step < tol || b - a < tol {
            return Ok(Some(s));
        }
    }
    Ok(Some(s))
}
