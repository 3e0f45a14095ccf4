use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, MeasurementSeries, Result};
use crate::constants::{BOLTZMANN, HBAR};

/// Reference angular frequency for the power-law prefactor (2 pi x 1 MHz).
const OMEGA_REF: f64 = 2.0 * PI * 1e6;

/// Fitted parameters with 1-sigma uncertainties from the weighted normal equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.values[i], self.sigmas[i]))
    }

    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |(v, _)| v)
    }
}

/// A rate measured at some independent variable (angular frequency or temperature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub x: f64,
    pub rate: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Straight line through (ln x, ln rate) with sigma / rate as errors.
    #[default]
    LogLog,
    /// Weighted nonlinear least squares on the rates themselves.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Covariance of (slope, intercept).
    pub cov: [[f64; 2]; 2],
    pub chi2: f64,
}

/// Weighted straight-line fit with weights `1 / sigma^2`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(AnalysisError::Data("x, y and sigma lengths differ".into()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::Data("at least two points required".into()));
    }
    if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(AnalysisError::Data("sigma must be > 0".into()));
    }
    let (mut s, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let w = 1.0 / (sigma[i] * sigma[i]);
        s += w;
        sx += w * x[i];
        sy += w * y[i];
    }
    let (xm, ym) = (sx / s, sy / s);
    // centred sums avoid cancellation for offset abscissae
    let (mut stt, mut sty) = (0.0, 0.0);
    for i in 0..x.len() {
        let w = 1.0 / (sigma[i] * sigma[i]);
        let t = x[i] - xm;
        stt += w * t * t;
        sty += w * t * (y[i] - ym);
    }
    let spread = x.iter().map(|v| (v - xm).abs()).fold(0.0, f64::max);
    if stt == 0.0 || spread <= 1e-12 * xm.abs().max(f64::MIN_POSITIVE) {
        return Err(AnalysisError::Singular("all abscissae are equal".into()));
    }
    let slope = sty / stt;
    let intercept = ym - slope * xm;
    let var_slope = 1.0 / stt;
    let var_int = 1.0 / s + xm * xm / stt;
    let cov_si = -xm / stt;
    let chi2 = (0..x.len())
        .map(|i| ((y[i] - intercept - slope * x[i]) / sigma[i]).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        cov: [[var_slope, cov_si], [cov_si, var_int]],
        chi2,
    })
}

fn result(names: [&str; 2], values: [f64; 2], cov: [[f64; 2]; 2], chi2: f64, n: usize) -> FitResult {
    FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        values: values.to_vec(),
        sigmas: vec![cov[0][0].max(0.0).sqrt(), cov[1][1].max(0.0).sqrt()],
        covariance: vec![cov[0].to_vec(), cov[1].to_vec()],
        chi2,
        dof: n.saturating_sub(2),
    }
}

/// Heating rate (phonons/s) and intercept from a weighted linear fit of n-bar against delay.
pub fn heating_rate_fit(series: &MeasurementSeries) -> Result<FitResult> {
    let p = series.points();
    let x: Vec<f64> = p.iter().map(|q| q.delay).collect();
    let y: Vec<f64> = p.iter().map(|q| q.nbar).collect();
    let s: Vec<f64> = p.iter().map(|q| q.sigma).collect();
    let f = weighted_linear_fit(&x, &y, &s)?;
    Ok(result(["rate", "intercept"], [f.slope, f.intercept], f.cov, f.chi2, p.len()))
}

fn check_points(points: &[RatePoint], what: &str) -> Result<()> {
    if points.len() < 3 {
        return Err(AnalysisError::Data("power-law fit needs at least 3 points".into()));
    }
    for p in points {
        if !(p.x > 0.0 && p.x.is_finite()) {
            return Err(AnalysisError::Domain(format!("{what} must be > 0, got {}", p.x)));
        }
        if !(p.rate > 0.0 && p.rate.is_finite()) {
            return Err(AnalysisError::Domain(format!("rate must be > 0, got {}", p.rate)));
        }
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            return Err(AnalysisError::Data("sigma must be > 0".into()));
        }
    }
    Ok(())
}

/// Fit `rate = a * u^k` where `u = x / scale`; returns (a, k) and their covariance.
fn power_law(points: &[RatePoint], scale: f64, method: FitMethod) -> Result<([f64; 2], [[f64; 2]; 2], f64)> {
    let u: Vec<f64> = points.iter().map(|p| (p.x / scale).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.rate.ln()).collect();
    let s: Vec<f64> = points.iter().map(|p| p.sigma / p.rate).collect();
    let f = weighted_linear_fit(&u, &y, &s)?;
    let a = f.intercept.exp();
    let k = f.slope;
    // d(a, k) / d(slope, intercept) = [[0, a], [1, 0]]
    let cov = [
        [a * a * f.cov[1][1], a * f.cov[0][1]],
        [a * f.cov[0][1], f.cov[0][0]],
    ];
    match method {
        FitMethod::LogLog => Ok(([a, k], cov, f.chi2)),
        FitMethod::Direct => direct_power_law(points, scale, [a, k]),
    }
}

/// Levenberg-Marquardt on `rate = a * u^k`, started from the log-log estimate.
fn direct_power_law(points: &[RatePoint], scale: f64, start: [f64; 2]) -> Result<([f64; 2], [[f64; 2]; 2], f64)> {
    let eval = |p: [f64; 2]| -> (f64, [[f64; 2]; 2], [f64; 2]) {
        let (mut chi2, mut jtj, mut jtr) = (0.0, [[0.0; 2]; 2], [0.0; 2]);
        for q in points {
            let u = q.x / scale;
            let m = p[0] * u.powf(p[1]);
            let w = 1.0 / (q.sigma * q.sigma);
            let r = q.rate - m;
            let j = [u.powf(p[1]), m * u.ln()];
            chi2 += w * r * r;
            for a in 0..2 {
                jtr[a] += w * j[a] * r;
                for b in 0..2 {
                    jtj[a][b] += w * j[a] * j[b];
                }
            }
        }
        (chi2, jtj, jtr)
    };
    let mut p = start;
    let mut lambda = 1e-3;
    let (mut chi2, mut jtj, mut jtr) = eval(p);
    for _ in 0..200 {
        let m = [
            [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
            [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det == 0.0 {
            break;
        }
        let step = [
            (m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det,
            (m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det,
        ];
        let trial = [p[0] + step[0], p[1] + step[1]];
        let (c2, jj, jr) = eval(trial);
        if c2 <= chi2 {
            let done = (chi2 - c2) <= 1e-15 * chi2.max(1e-300)
                && step[0].abs() <= 1e-12 * p[0].abs()
                && step[1].abs() <= 1e-12 * p[1].abs().max(1.0);
            p = trial;
            chi2 = c2;
            jtj = jj;
            jtr = jr;
            lambda = (lambda * 0.3).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
        }
    }
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    if det == 0.0 {
        return Err(AnalysisError::Singular("degenerate power-law Jacobian".into()));
    }
    let cov = [
        [jtj[1][1] / det, -jtj[0][1] / det],
        [-jtj[1][0] / det, jtj[0][0] / det],
    ];
    Ok((p, cov, chi2))
}

/// Fit `rate = n1 * (omega / 2pi MHz)^(-alpha)`. Point `x` is the angular frequency (rad/s).
pub fn power_law_fit_freq(points: &[RatePoint], method: FitMethod) -> Result<FitResult> {
    check_points(points, "angular frequency")?;
    let ([a, k], cov, chi2) = power_law(points, OMEGA_REF, method)?;
    // alpha = -k flips the sign of the cross term
    let cov = [[cov[0][0], -cov[0][1]], [-cov[1][0], cov[1][1]]];
    Ok(result(["n1", "alpha"], [a, -k], cov, chi2, points.len()))
}

/// Fit `rate = n0 * (k_B T / hbar omega)^beta`. Point `x` is the temperature (K).
pub fn power_law_fit_temp(points: &[RatePoint], omega: f64, method: FitMethod) -> Result<FitResult> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(AnalysisError::Domain(format!("omega must be > 0, got {omega}")));
    }
    check_points(points, "temperature")?;
    let scale = HBAR * omega / BOLTZMANN;
    let ([a, k], cov, chi2) = power_law(points, scale, method)?;
    Ok(result(["n0", "beta"], [a, k], cov, chi2, points.len()))
}

/// Full temperature model `n0 * (1 + (T / T0)^beta)` including the zero-temperature offset.
pub fn zero_temperature_offset_rate(t: f64, n0: f64, t0: f64, beta: f64) -> f64 {
    n0 * (1.0 + (t / t0).powf(beta))
}
