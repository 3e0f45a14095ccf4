//! Bounded voltage-set synthesis: confining wells at a target position and
//! frequency, stray-field shims and transport sequences.
//!
//! All solves minimise the Euclidean norm of the electrode voltages subject
//! to linear equality constraints and the +/-10 V output range.

mod qp;
mod transport;

pub use qp::{numerical_rank, BoxQp, QpSolution, RANK_TOL};
pub use transport::{build_transport, TransportOptions, TransportPoint, TransportProfile};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::trap::{
    rect_gradient, rect_hessian, ElectrodeGeometry, ElectrodeRole, Point, TrapError, MAX_ABS_VOLTAGE,
};
use crate::{IonSpecies, TrapLayout, VoltageSet};

#[derive(Debug, thiserror::Error)]
pub enum WaveformError {
    #[error(transparent)]
    Trap(#[from] TrapError),
    #[error("infeasible: constraint `{constraint}` {detail}")]
    Infeasible { constraint: String, detail: String },
    #[error("response matrix has rank {rank}, need {rows}")]
    Rank { rank: usize, rows: usize },
    #[error("{0}")]
    Domain(String),
    #[error("at z0 = {z0} um: {source}")]
    AtPosition {
        z0: f64,
        #[source]
        source: Box<WaveformError>,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, WaveformError>;

/// Which electrodes a solve may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ElectrodeSubset {
    Fixed { ids: Vec<String> },
    /// The `count` electrodes of `role` whose axial centres are closest to the
    /// target. Ties go to the electrode listed first in the layout.
    Nearest { count: usize, role: ElectrodeRole },
}

impl ElectrodeSubset {
    pub fn fixed<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::Fixed { ids: ids.into_iter().map(Into::into).collect() }
    }

    /// Resolve to electrodes in layout order.
    pub fn resolve<'a>(&self, layout: &'a TrapLayout, z0: f64) -> Result<Vec<&'a ElectrodeGeometry>> {
        let picked: Vec<&ElectrodeGeometry> = match self {
            Self::Fixed { ids } => {
                let mut out = Vec::with_capacity(ids.len());
                for id in ids {
                    let e = layout.electrode(id)?;
                    if !e.role().is_dc() {
                        return Err(WaveformError::Domain(format!("electrode `{id}` is not DC-controlled")));
                    }
                    if out.iter().any(|o: &&ElectrodeGeometry| o.id() == id) {
                        return Err(WaveformError::Domain(format!("electrode `{id}` listed twice")));
                    }
                    out.push(e);
                }
                out
            }
            Self::Nearest { count, role } => {
                let mut pool: Vec<(usize, &ElectrodeGeometry)> = layout
                    .electrodes()
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.role() == *role && role.is_dc())
                    .collect();
                pool.sort_by(|(ia, a), (ib, b)| {
                    let da = (a.axial_center() - z0).abs();
                    let db = (b.axial_center() - z0).abs();
                    da.total_cmp(&db).then(ia.cmp(ib))
                });
                pool.truncate(*count);
                pool.sort_by_key(|(i, _)| *i);
                pool.into_iter().map(|(_, e)| e).collect()
            }
        };
        if picked.is_empty() {
            return Err(WaveformError::Domain("electrode subset is empty".into()));
        }
        Ok(picked)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Symmetric voltage limit (V).
    pub bound: f64,
    /// Convergence tolerance on the row-normalised constraints.
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { bound: MAX_ABS_VOLTAGE, tol: 1e-13 }
    }
}

impl SolveOptions {
    fn check(&self) -> Result<()> {
        if !(self.bound > 0.0 && self.bound <= MAX_ABS_VOLTAGE) {
            return Err(WaveformError::Domain(format!(
                "voltage bound must be in (0, {MAX_ABS_VOLTAGE}], got {}",
                self.bound
            )));
        }
        if !(self.tol > 0.0) {
            return Err(WaveformError::Domain("tolerance must be positive".into()));
        }
        Ok(())
    }
}

fn gradient(e: &ElectrodeGeometry, p: Point) -> Vector3<f64> {
    e.rects().iter().map(|r| rect_gradient(r, p)).sum()
}

fn axial_curvature(e: &ElectrodeGeometry, p: Point) -> f64 {
    e.rects().iter().map(|r| rect_hessian(r, p)[(0, 0)]).sum()
}

fn to_voltage_set(ids: &[&ElectrodeGeometry], x: &DVector<f64>) -> Result<VoltageSet> {
    let mut v = VoltageSet::new();
    for (e, val) in ids.iter().zip(x.iter()) {
        // the solver can overshoot a bound by rounding
        v.set(e.id(), val.clamp(-MAX_ABS_VOLTAGE, MAX_ABS_VOLTAGE))?;
    }
    Ok(v)
}

/// Voltages confining the ion at axial position `z0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellSolution {
    pub z0: f64,
    pub omega_target: f64,
    pub voltages: VoltageSet,
    /// Residual axial field (V/um) and relative curvature error at `z0`.
    pub residual: [f64; 2],
    pub at_bound: Vec<String>,
}

/// Minimum-norm voltages on `subset` giving a potential minimum at `z0` (um
/// along the axis) with secular angular frequency `omega`. The RF
/// pseudopotential is included in both constraints.
pub fn solve_well(
    layout: &TrapLayout,
    species: &IonSpecies,
    z0: f64,
    omega: f64,
    subset: &ElectrodeSubset,
    opts: &SolveOptions,
) -> Result<WellSolution> {
    opts.check()?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(WaveformError::Domain(format!("target frequency must be positive, got {omega} rad/s")));
    }
    let electrodes = subset.resolve(layout, z0)?;
    let (lo, hi) = electrodes
        .iter()
        .flat_map(|e| e.rects())
        .fold((f64::MAX, f64::MIN), |(l, h), r| (l.min(r.x1), h.max(r.x2)));
    if !(z0 >= lo && z0 <= hi) {
        return Err(WaveformError::Domain(format!("z0 = {z0} um lies outside the subset span [{lo}, {hi}]")));
    }
    let p = layout.axis().at(z0);
    let empty = VoltageSet::new();
    let (_, pseudo_slope, pseudo_curv) = {
        use crate::trap::AxialPotential;
        layout.axial_profile(&empty, *species)?.eval(z0)?
    };
    let kappa = species.mass_kg * omega * omega / species.charge_c * 1e-12;

    let n = electrodes.len();
    let a = DMatrix::from_fn(2, n, |r, c| match r {
        0 => gradient(electrodes[c], p).x,
        _ => axial_curvature(electrodes[c], p),
    });
    let b = DVector::from_row_slice(&[-pseudo_slope, kappa - pseudo_curv]);
    let qp = BoxQp {
        a: a.clone(),
        b: b.clone(),
        lo: DVector::from_element(n, -opts.bound),
        hi: DVector::from_element(n, opts.bound),
        rows: vec!["axial field".into(), "axial curvature".into()],
        cols: electrodes.iter().map(|e| e.id().to_string()).collect(),
    };
    let sol = qp.solve(opts.tol)?;
    let r = &a * &sol.x - &b;
    Ok(WellSolution {
        z0,
        omega_target: omega,
        voltages: to_voltage_set(&electrodes, &sol.x)?,
        residual: [r[0], r[1] / kappa],
        at_bound: sol.at_bound.iter().map(|&i| electrodes[i].id().to_string()).collect(),
    })
}

/// Voltage changes producing a field at the ion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimSolution {
    pub delta: VoltageSet,
    /// Field produced by `delta` at the ion (V/mm).
    pub field: [f64; 3],
    pub at_bound: Vec<String>,
}

/// Minimum-norm voltage changes on `subset` that add the field `target`
/// (V/mm, chip frame) at the ion on the axis at `z0`, without changing the
/// axial curvature. With a `base` set the output range is enforced on
/// `base + delta`.
pub fn solve_shim(
    layout: &TrapLayout,
    z0: f64,
    target: Vector3<f64>,
    subset: &ElectrodeSubset,
    base: Option<&VoltageSet>,
    opts: &SolveOptions,
) -> Result<ShimSolution> {
    opts.check()?;
    if !target.iter().all(|c| c.is_finite()) {
        return Err(WaveformError::Domain("target field must be finite".into()));
    }
    let electrodes = subset.resolve(layout, z0)?;
    let p = layout.axis().at(z0);
    let n = electrodes.len();
    // field per volt in V/mm
    let resp: Vec<Vector3<f64>> = electrodes.iter().map(|e| -gradient(e, p) * 1e3).collect();
    let a = DMatrix::from_fn(4, n, |r, c| if r < 3 { resp[c][r] } else { axial_curvature(electrodes[c], p) });
    let b = DVector::from_row_slice(&[target.x, target.y, target.z, 0.0]);
    let offset = |e: &ElectrodeGeometry| base.map_or(0.0, |v| v.get(e.id()));
    let qp = BoxQp {
        a,
        b,
        lo: DVector::from_iterator(n, electrodes.iter().map(|e| (-opts.bound - offset(e)).max(-opts.bound))),
        hi: DVector::from_iterator(n, electrodes.iter().map(|e| (opts.bound - offset(e)).min(opts.bound))),
        rows: vec!["field x".into(), "field y".into(), "field z".into(), "axial curvature".into()],
        cols: electrodes.iter().map(|e| e.id().to_string()).collect(),
    };
    let sol = qp.solve(opts.tol)?;
    let field = resp.iter().zip(sol.x.iter()).map(|(r, v)| r * *v).sum::<Vector3<f64>>();
    Ok(ShimSolution {
        delta: to_voltage_set(&electrodes, &sol.x)?,
        field: [field.x, field.y, field.z],
        at_bound: sol.at_bound.iter().map(|&i| electrodes[i].id().to_string()).collect(),
    })
}

/// Shim that cancels a stray field `stray` (V/mm) at the ion.
pub fn compensate(
    layout: &TrapLayout,
    z0: f64,
    stray: Vector3<f64>,
    subset: &ElectrodeSubset,
    base: Option<&VoltageSet>,
    opts: &SolveOptions,
) -> Result<ShimSolution> {
    solve_shim(layout, z0, -stray, subset, base, opts)
}
