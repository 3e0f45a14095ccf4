use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};

/// Resistance thermometer table, interpolated piecewise linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    /// (T in K, R in Ohm), sorted by temperature.
    points: Vec<(f64, f64)>,
}

impl CalibrationTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(AnalysisError::Data("calibration needs at least two points".into()));
        }
        if points.iter().any(|(t, r)| !t.is_finite() || !r.is_finite()) {
            return Err(AnalysisError::Data("non-finite calibration entry".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let rising = points[1].1 > points[0].1;
        for w in points.windows(2) {
            let ok_t = w[1].0 > w[0].0;
            let ok_r = if rising { w[1].1 > w[0].1 } else { w[1].1 < w[0].1 };
            if !ok_t || !ok_r {
                return Err(AnalysisError::Data(format!(
                    "calibration not strictly monotone between {:?} and {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { points })
    }

    /// Read `T_K,R_ohm` rows.
    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers != ["T_K", "R_ohm"] {
            return Err(AnalysisError::Data(format!("expected columns T_K,R_ohm, got {headers:?}")));
        }
        let mut pts = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| -> Result<f64> {
                rec.get(j)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| AnalysisError::Data(format!("row {}: bad number", i + 2)))
            };
            pts.push((parse(0)?, parse(1)?));
        }
        Self::new(pts)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn interp(&self, v: f64, from: fn(&(f64, f64)) -> f64, to: fn(&(f64, f64)) -> f64) -> Result<f64> {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (from(p), to(p))).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
        if !(v >= lo && v <= hi) {
            return Err(AnalysisError::Extrapolation { value: v, lo, hi });
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if v == x0 {
                return Ok(y0);
            }
            if v == x1 {
                return Ok(y1);
            }
            if v > x0 && v < x1 {
                return Ok(y0 + (y1 - y0) * (v - x0) / (x1 - x0));
            }
        }
        unreachable!("value inside the table range")
    }

    pub fn temperature_from_resistance(&self, r: f64) -> Result<f64> {
        self.interp(r, |p| p.1, |p| p.0)
    }

    pub fn resistance_from_temperature(&self, t: f64) -> Result<f64> {
        self.interp(t, |p| p.0, |p| p.1)
    }
}
