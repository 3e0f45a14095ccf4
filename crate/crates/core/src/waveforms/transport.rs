use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_well, ElectrodeSubset, Result, SolveOptions, WaveformError};
use crate::scenario::fmt_num;
use crate::trap::AxialWell;
use crate::{IonSpecies, TrapLayout, VoltageSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportOptions {
    pub solve: SolveOptions,
    /// Half-width (um) of the interval searched for the achieved minimum.
    pub window: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self { solve: SolveOptions::default(), window: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPoint {
    pub z0: f64,
    pub voltages: VoltageSet,
    pub achieved: AxialWell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportProfile {
    pub omega_target: f64,
    pub points: Vec<TransportPoint>,
    /// Largest single-electrode voltage change between consecutive points (V).
    pub max_step_dv: f64,
}

/// Well solves at `start, start +/- step, ...` up to `end`.
pub fn build_transport(
    layout: &TrapLayout,
    species: &IonSpecies,
    (start, end): (f64, f64),
    step: f64,
    omega: f64,
    subset: &ElectrodeSubset,
    opts: &TransportOptions,
) -> Result<TransportProfile> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(WaveformError::Domain(format!("transport step must be positive, got {step}")));
    }
    if !(start.is_finite() && end.is_finite()) {
        return Err(WaveformError::Domain("transport range must be finite".into()));
    }
    if !(opts.window > 0.0) {
        return Err(WaveformError::Domain("search window must be positive".into()));
    }
    let count = ((end - start).abs() / step + 1e-9).floor() as usize + 1;
    let dir = if end >= start { 1.0 } else { -1.0 };
    let zs: Vec<f64> = (0..count).map(|i| start + dir * step * i as f64).collect();
    let points = zs
        .par_iter()
        .map(|&z0| {
            let at = |e: WaveformError| WaveformError::AtPosition { z0, source: Box::new(e) };
            let sol = solve_well(layout, species, z0, omega, subset, &opts.solve).map_err(at)?;
            let achieved = layout
                .axial_well(&sol.voltages, *species, (z0 - opts.window, z0 + opts.window))
                .map_err(|e| at(e.into()))?;
            Ok(TransportPoint { z0, voltages: sol.voltages, achieved })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_step_dv = points
        .windows(2)
        .map(|w| {
            let ids = w[0].voltages.iter().map(|(id, _)| id).chain(w[1].voltages.iter().map(|(id, _)| id));
            ids.map(|id| (w[1].voltages.get(id) - w[0].voltages.get(id)).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(TransportProfile { omega_target: omega, points, max_step_dv })
}

impl TransportProfile {
    /// Electrode ids used anywhere in the profile, in layout order.
    pub fn electrode_ids<'a>(&self, layout: &'a TrapLayout) -> Vec<&'a str> {
        layout
            .electrodes()
            .iter()
            .map(|e| e.id())
            .filter(|id| self.points.iter().any(|p| p.voltages.contains(id)))
            .collect()
    }

    /// One row per point: target position, electrode voltages, achieved
    /// position, secular frequency (MHz) and depth (eV).
    pub fn write_csv<W: Write>(&self, layout: &TrapLayout, out: W) -> Result<()> {
        let ids = self.electrode_ids(layout);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["z0_um".to_string()];
        header.extend(ids.iter().map(|id| format!("v_{id}")));
        header.extend(["z_achieved_um", "freq_mhz", "depth_ev"].map(String::from));
        w.write_record(&header)?;
        for p in &self.points {
            let mut row = vec![fmt_num(p.z0)];
            row.extend(ids.iter().map(|id| fmt_num(p.voltages.get(id))));
            row.push(fmt_num(p.achieved.z0));
            row.push(fmt_num(p.achieved.freq_mhz()));
            row.push(fmt_num(p.achieved.depth));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
