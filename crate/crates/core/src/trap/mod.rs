//! Trap model: electrode voltages to axial potential, equilibrium position,
//! secular frequency, trap depth and stray-field response.
//!
//! Coordinates are in the chip frame, in micrometres: `x` runs along the trap
//! axis (the transport direction), `y` across the RF rails and `z` is the
//! height above the electrode plane. The potential basis is the gapless-plane
//! solution for rectangular electrodes; the part of the plane not covered by
//! any electrode is an implicit grounded conductor (id [`GROUND_ID`]).

mod basis;
mod geometry;
mod layout;
mod voltages;
mod well;

pub use basis::{rect_hessian, rect_potential, rect_gradient};
pub use geometry::{ElectrodeGeometry, ElectrodeRole, Point, Rect};
pub use layout::{AxisLine, IonSpecies, LayoutProfile, TrapLayout, DEFAULT_RF_FREQUENCY_MHZ};
pub use voltages::{VoltageSet, GROUND_ID, MAX_ABS_VOLTAGE};
pub use well::{solve_axial_well, AxialPotential, AxialWell, WellOptions};

use nalgebra::{Matrix3, Vector3};

#[derive(Debug, thiserror::Error)]
pub enum TrapError {
    #[error("point height must be positive, got z = {0} um")]
    Domain(f64),
    #[error("no confining axial minimum in [{lo}, {hi}] um")]
    NoWell { lo: f64, hi: f64 },
    #[error("unknown electrode `{0}`")]
    UnknownElectrode(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("voltage {volts} V on `{id}` exceeds the +/-{limit} V range")]
    VoltageRange { id: String, volts: f64, limit: f64 },
    #[error("failed to read layout {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse layout: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Order of derivative requested from [`electrode_derivatives`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// Either the gradient (1/um) or the Hessian (1/um^2) of a basis function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Derivative {
    Gradient(Vector3<f64>),
    Hessian(Matrix3<f64>),
}

/// Potential at `p` per volt applied to electrode `g`, all other electrodes grounded.
pub fn electrode_potential(g: &ElectrodeGeometry, p: Point) -> Result<f64, TrapError> {
    check_height(p)?;
    Ok(g.rects().iter().map(|r| rect_potential(r, p)).sum())
}

pub fn electrode_derivatives(
    g: &ElectrodeGeometry,
    p: Point,
    order: DerivativeOrder,
) -> Result<Derivative, TrapError> {
    check_height(p)?;
    Ok(match order {
        DerivativeOrder::First => Derivative::Gradient(
            g.rects().iter().map(|r| rect_gradient(r, p)).sum(),
        ),
        DerivativeOrder::Second => Derivative::Hessian(
            g.rects().iter().map(|r| rect_hessian(r, p)).sum(),
        ),
    })
}

pub(crate) fn check_height(p: Point) -> Result<(), TrapError> {
    if p.z > 0.0 && p.z.is_finite() {
        Ok(())
    } else {
        Err(TrapError::Domain(p.z))
    }
}
