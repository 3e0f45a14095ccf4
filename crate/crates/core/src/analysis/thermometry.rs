use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};

/// Red and blue sideband excitation probabilities with their shot counts.
/// A count of zero means no uncertainty is requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandPair {
    pub p_red: f64,
    pub p_blue: f64,
    pub n_red: u32,
    pub n_blue: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbarEstimate {
    pub nbar: f64,
    pub sigma: Option<f64>,
}

/// Mean phonon number `r / (1 - r)` with `r = p_red / p_blue`, and its
/// projection-noise uncertainty when shot counts are given.
pub fn nbar_from_sidebands(s: &SidebandPair) -> Result<NbarEstimate> {
    for (name, p) in [("p_red", s.p_red), ("p_blue", s.p_blue)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(AnalysisError::Domain(format!("{name} = {p} is not a probability")));
        }
    }
    if s.p_blue == 0.0 {
        return Err(AnalysisError::Domain("p_blue = 0".into()));
    }
    let r = s.p_red / s.p_blue;
    if r >= 1.0 {
        return Err(AnalysisError::ThermalDivergence(r));
    }
    let nbar = r / (1.0 - r);
    let sigma = (s.n_red > 0 && s.n_blue > 0).then(|| {
        let sp_r = (s.p_red * (1.0 - s.p_red) / f64::from(s.n_red)).sqrt();
        let sp_b = (s.p_blue * (1.0 - s.p_blue) / f64::from(s.n_blue)).sqrt();
        let d = (1.0 - r).powi(2);
        let dn_dr = 1.0 / (s.p_blue * d);
        let dn_db = -s.p_red / (s.p_blue * s.p_blue * d);
        (dn_dr * sp_r).hypot(dn_db * sp_b)
    });
    Ok(NbarEstimate { nbar, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub delay: f64,
    pub nbar: f64,
    pub sigma: f64,
}

/// n-bar measured at increasing delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MeasurementPoint>", into = "Vec<MeasurementPoint>")]
pub struct MeasurementSeries {
    points: Vec<MeasurementPoint>,
}

impl TryFrom<Vec<MeasurementPoint>> for MeasurementSeries {
    type Error = AnalysisError;

    fn try_from(points: Vec<MeasurementPoint>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<MeasurementSeries> for Vec<MeasurementPoint> {
    fn from(s: MeasurementSeries) -> Self {
        s.points
    }
}

impl MeasurementSeries {
    pub fn new(points: Vec<MeasurementPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.sigma > 0.0 && p.sigma.is_finite()) {
                return Err(AnalysisError::Data(format!("point {i}: sigma must be > 0")));
            }
            if !(p.delay >= 0.0 && p.delay.is_finite() && p.nbar.is_finite()) {
                return Err(AnalysisError::Data(format!("point {i}: bad delay or n-bar")));
            }
            if i > 0 && p.delay <= points[i - 1].delay {
                return Err(AnalysisError::Data(format!("point {i}: delays must strictly increase")));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[MeasurementPoint] {
        &self.points
    }

    /// Read `delay_s,nbar,sigma` rows, or `delay_s,p_red,p_blue,shots` rows
    /// which are converted through sideband thermometry.
    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let num = |rec: &csv::StringRecord, i: usize, line: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| AnalysisError::Data(format!("row {line}: column {} is not a number", i + 1)))
        };
        let mut points = Vec::new();
        match cols.as_slice() {
            ["delay_s", "nbar", "sigma"] => {
                for (line, rec) in rdr.records().enumerate() {
                    let rec = rec?;
                    points.push(MeasurementPoint {
                        delay: num(&rec, 0, line + 2)?,
                        nbar: num(&rec, 1, line + 2)?,
                        sigma: num(&rec, 2, line + 2)?,
                    });
                }
            }
            ["delay_s", "p_red", "p_blue", "shots"] => {
                for (line, rec) in rdr.records().enumerate() {
                    let rec = rec?;
                    let shots = num(&rec, 3, line + 2)?;
                    if !(shots >= 1.0 && shots.fract() == 0.0 && shots <= f64::from(u32::MAX)) {
                        return Err(AnalysisError::Data(format!("row {}: bad shot count", line + 2)));
                    }
                    let est = nbar_from_sidebands(&SidebandPair {
                        p_red: num(&rec, 1, line + 2)?,
                        p_blue: num(&rec, 2, line + 2)?,
                        n_red: shots as u32,
                        n_blue: shots as u32,
                    })?;
                    points.push(MeasurementPoint {
                        delay: num(&rec, 0, line + 2)?,
                        nbar: est.nbar,
                        sigma: est.sigma.unwrap_or(0.0),
                    });
                }
            }
            other => {
                return Err(AnalysisError::Data(format!("unrecognised measurement columns {other:?}")));
            }
        }
        Self::new(points)
    }
}
