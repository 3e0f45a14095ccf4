use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::well::{solve_axial_well, AxialPotential, AxialWell, WellOptions};
use super::{
    check_height, rect_gradient, rect_hessian, rect_potential, ElectrodeGeometry, ElectrodeRole,
    Point, TrapError, VoltageSet, GROUND_ID,
};
use crate::constants::{omega_from_mhz, ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE};

/// RF drive frequency used when a layout file does not give one.
pub const DEFAULT_RF_FREQUENCY_MHZ: f64 = 40.0;

const PRESETS: &[(&str, &str)] = &[
    ("trap1", include_str!("../../presets/trap1.json")),
    ("trap2", include_str!("../../presets/trap2.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub mass_kg: f64,
    pub charge_c: f64,
}

impl IonSpecies {
    pub fn new(mass_kg: f64, charge_c: f64) -> Result<Self, TrapError> {
        if !(mass_kg > 0.0 && mass_kg.is_finite()) || charge_c == 0.0 || !charge_c.is_finite() {
            return Err(TrapError::Config(format!(
                "invalid species: mass {mass_kg} kg, charge {charge_c} C"
            )));
        }
        Ok(Self { mass_kg, charge_c })
    }

    /// Singly charged 40Ca+.
    pub fn calcium40() -> Self {
        Self {
            mass_kg: 40.0 * ATOMIC_MASS_UNIT,
            charge_c: ELEMENTARY_CHARGE,
        }
    }

    pub fn charge_to_mass(&self) -> f64 {
        self.charge_c / self.mass_kg
    }
}

impl Default for IonSpecies {
    fn default() -> Self {
        Self::calcium40()
    }
}

/// The straight RF-null line the axial analysis runs along.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisLine {
    pub y: f64,
    pub z: f64,
}

impl AxisLine {
    pub fn at(&self, x: f64) -> Point {
        Point::new(x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayoutFile {
    name: String,
    ion_height_um: f64,
    rf_amplitude_v: f64,
    #[serde(default = "default_rf_mhz")]
    rf_frequency_mhz: f64,
    electrodes: Vec<ElectrodeGeometry>,
}

fn default_rf_mhz() -> f64 {
    DEFAULT_RF_FREQUENCY_MHZ
}

#[derive(Debug, Clone)]
pub struct TrapLayout {
    name: String,
    electrodes: Vec<ElectrodeGeometry>,
    index: BTreeMap<String, usize>,
    ion_height: f64,
    rf_amplitude: f64,
    rf_omega: f64,
    axis: AxisLine,
}

impl TrapLayout {
    pub fn new(
        name: impl Into<String>,
        electrodes: Vec<ElectrodeGeometry>,
        ion_height: f64,
        rf_amplitude: f64,
        rf_frequency_mhz: f64,
    ) -> Result<Self, TrapError> {
        if !(ion_height > 0.0 && ion_height.is_finite()) {
            return Err(TrapError::Geometry(format!("ion height must be positive, got {ion_height}")));
        }
        let mut index = BTreeMap::new();
        for (i, e) in electrodes.iter().enumerate() {
            if e.id() == GROUND_ID {
                return Err(TrapError::Geometry(format!("electrode id `{GROUND_ID}` is reserved")));
            }
            if index.insert(e.id().to_string(), i).is_some() {
                return Err(TrapError::Geometry(format!("duplicate electrode id `{}`", e.id())));
            }
        }
        for (i, a) in electrodes.iter().enumerate() {
            for b in &electrodes[i + 1..] {
                let clash = a
                    .rects()
                    .iter()
                    .any(|ra| b.rects().iter().any(|rb| ra.overlaps(rb)));
                if clash {
                    return Err(TrapError::Geometry(format!(
                        "electrodes `{}` and `{}` overlap",
                        a.id(),
                        b.id()
                    )));
                }
            }
        }
        let mut layout = Self {
            name: name.into(),
            electrodes,
            index,
            ion_height,
            rf_amplitude,
            rf_omega: omega_from_mhz(rf_frequency_mhz),
            axis: AxisLine { y: 0.0, z: ion_height },
        };
        layout.axis = layout.locate_rf_null()?;
        Ok(layout)
    }

    pub fn from_json_str(s: &str) -> Result<Self, TrapError> {
        let f: LayoutFile = serde_json::from_str(s)?;
        Self::new(f.name, f.electrodes, f.ion_height_um, f.rf_amplitude_v, f.rf_frequency_mhz)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TrapError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|source| TrapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&s)
    }

    /// Shipped layouts: `trap1` (170 um ion height) and `trap2` (80 um, period-9 co-wiring).
    pub fn preset(name: &str) -> Result<Self, TrapError> {
        let (_, json) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| TrapError::Config(format!("unknown layout preset `{name}`")))?;
        Self::from_json_str(json)
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn to_json(&self) -> String {
        let f = LayoutFile {
            name: self.name.clone(),
            ion_height_um: self.ion_height,
            rf_amplitude_v: self.rf_amplitude,
            rf_frequency_mhz: crate::constants::mhz_from_omega(self.rf_omega),
            electrodes: self.electrodes.clone(),
        };
        serde_json::to_string_pretty(&f).expect("layout serialises")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn electrodes(&self) -> &[ElectrodeGeometry] {
        &self.electrodes
    }

    pub fn electrode(&self, id: &str) -> Result<&ElectrodeGeometry, TrapError> {
        self.index
            .get(id)
            .map(|&i| &self.electrodes[i])
            .ok_or_else(|| TrapError::UnknownElectrode(id.to_string()))
    }

    pub fn ids_with_role(&self, role: ElectrodeRole) -> Vec<&str> {
        self.electrodes
            .iter()
            .filter(|e| e.role() == role)
            .map(|e| e.id())
            .collect()
    }

    pub fn dc_ids(&self) -> Vec<&str> {
        self.electrodes
            .iter()
            .filter(|e| e.role().is_dc())
            .map(|e| e.id())
            .collect()
    }

    /// Nominal ion height from the layout file (um).
    pub fn ion_height(&self) -> f64 {
        self.ion_height
    }

    pub fn rf_amplitude(&self) -> f64 {
        self.rf_amplitude
    }

    /// RF drive angular frequency (rad/s).
    pub fn rf_omega(&self) -> f64 {
        self.rf_omega
    }

    pub fn with_rf_amplitude(mut self, volts: f64) -> Self {
        self.rf_amplitude = volts;
        self
    }

    pub fn with_rf_omega(mut self, omega: f64) -> Self {
        self.rf_omega = omega;
        self
    }

    /// RF null line through the middle of the layout. Falls back to the nominal
    /// height above `y = 0` when the layout has no RF electrodes.
    pub fn axis(&self) -> AxisLine {
        self.axis
    }

    pub fn basis(&self, id: &str, p: Point) -> Result<f64, TrapError> {
        let e = self.electrode(id)?;
        super::electrode_potential(e, p)
    }

    /// Pairs of (electrode, V_g - V_gnd) that contribute to the DC potential.
    fn weights(&self, v: &VoltageSet) -> Result<Vec<(&ElectrodeGeometry, f64)>, TrapError> {
        for (id, _) in v.iter() {
            if id != GROUND_ID && !self.index.contains_key(id) {
                return Err(TrapError::UnknownElectrode(id.to_string()));
            }
        }
        let g = v.ground();
        Ok(self
            .electrodes
            .iter()
            .map(|e| (e, v.get(e.id()) - g))
            .filter(|(_, w)| *w != 0.0)
            .collect())
    }

    /// DC potential (V) at `p`. Electrodes absent from `v` are at 0 V.
    pub fn potential(&self, v: &VoltageSet, p: Point) -> Result<f64, TrapError> {
        check_height(p)?;
        let sum: f64 = self
            .weights(v)?
            .iter()
            .map(|(e, w)| w * e.rects().iter().map(|r| rect_potential(r, p)).sum::<f64>())
            .sum();
        Ok(v.ground() + sum)
    }

    /// Gradient of the DC potential (V/um).
    pub fn potential_gradient(&self, v: &VoltageSet, p: Point) -> Result<Vector3<f64>, TrapError> {
        check_height(p)?;
        Ok(self
            .weights(v)?
            .iter()
            .map(|(e, w)| *w * e.rects().iter().map(|r| rect_gradient(r, p)).sum::<Vector3<f64>>())
            .sum())
    }

    /// Hessian of the DC potential (V/um^2).
    pub fn potential_hessian(&self, v: &VoltageSet, p: Point) -> Result<Matrix3<f64>, TrapError> {
        check_height(p)?;
        Ok(self
            .weights(v)?
            .iter()
            .map(|(e, w)| *w * e.rects().iter().map(|r| rect_hessian(r, p)).sum::<Matrix3<f64>>())
            .sum())
    }

    fn rf_rects(&self) -> impl Iterator<Item = &super::Rect> {
        self.electrodes
            .iter()
            .filter(|e| e.role() == ElectrodeRole::Rf)
            .flat_map(|e| e.rects().iter())
    }

    fn has_rf(&self) -> bool {
        self.rf_rects().next().is_some()
    }

    /// Gradient of the RF basis (all RF electrodes at 1 V), 1/um.
    pub fn rf_basis_gradient(&self, p: Point) -> Result<Vector3<f64>, TrapError> {
        check_height(p)?;
        Ok(self.rf_rects().map(|r| rect_gradient(r, p)).sum())
    }

    pub fn rf_basis_hessian(&self, p: Point) -> Result<Matrix3<f64>, TrapError> {
        check_height(p)?;
        Ok(self.rf_rects().map(|r| rect_hessian(r, p)).sum())
    }

    fn pseudo_prefactor(&self, species: &IonSpecies) -> Result<f64, TrapError> {
        if !(self.rf_omega > 0.0) {
            return Err(TrapError::Config(format!(
                "RF drive frequency must be positive, got {} rad/s",
                self.rf_omega
            )));
        }
        let q = species.charge_c;
        // J per (1/um)^2 of basis gradient
        Ok(q * q * self.rf_amplitude * self.rf_amplitude * 1e12
            / (4.0 * species.mass_kg * self.rf_omega * self.rf_omega))
    }

    /// Ponderomotive pseudopotential energy (eV) at `p`.
    pub fn pseudopotential(&self, p: Point, species: &IonSpecies) -> Result<f64, TrapError> {
        let c = self.pseudo_prefactor(species)?;
        let g = self.rf_basis_gradient(p)?;
        Ok(c * g.norm_squared() / ELEMENTARY_CHARGE)
    }

    /// Field at the ion per volt on electrode `id`, (V/m)/V. Grounded electrodes give zero.
    pub fn stray_field_response(&self, id: &str, p: Point) -> Result<Vector3<f64>, TrapError> {
        check_height(p)?;
        if id == GROUND_ID {
            return Ok(Vector3::zeros());
        }
        let e = self.electrode(id)?;
        if e.role() == ElectrodeRole::Ground {
            return Ok(Vector3::zeros());
        }
        let g: Vector3<f64> = e.rects().iter().map(|r| rect_gradient(r, p)).sum();
        Ok(-g * 1e6)
    }

    /// Response to the same voltage applied to every electrode in `ids`.
    pub fn common_mode_response<'a, I>(&self, ids: I, p: Point) -> Result<Vector3<f64>, TrapError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        ids.into_iter()
            .map(|id| self.stray_field_response(id, p))
            .sum()
    }

    pub fn axial_profile<'a>(
        &'a self,
        v: &'a VoltageSet,
        species: IonSpecies,
    ) -> Result<LayoutProfile<'a>, TrapError> {
        let weights = self.weights(v)?;
        let pseudo = if self.has_rf() && self.rf_amplitude != 0.0 {
            Some(self.pseudo_prefactor(&species)? / species.charge_c)
        } else {
            None
        };
        Ok(LayoutProfile {
            layout: self,
            ground: v.ground(),
            weights,
            pseudo,
            axis: self.axis,
        })
    }

    pub fn axial_well(
        &self,
        v: &VoltageSet,
        species: IonSpecies,
        interval: (f64, f64),
    ) -> Result<AxialWell, TrapError> {
        let profile = self.axial_profile(v, species)?;
        solve_axial_well(&profile, &species, interval, &WellOptions::default())
    }

    fn locate_rf_null(&self) -> Result<AxisLine, TrapError> {
        if !self.has_rf() {
            return Ok(AxisLine { y: 0.0, z: self.ion_height });
        }
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for r in self.rf_rects() {
            xmin = xmin.min(r.x1);
            xmax = xmax.max(r.x2);
            ymin = ymin.min(r.y1);
            ymax = ymax.max(r.y2);
        }
        let x = 0.5 * (xmin + xmax);
        let (mut y, mut z) = (0.5 * (ymin + ymax), self.ion_height);
        for _ in 0..100 {
            let p = Point::new(x, y, z);
            let g = self.rf_basis_gradient(p)?;
            let h = self.rf_basis_hessian(p)?;
            let det = h[(1, 1)] * h[(2, 2)] - h[(1, 2)] * h[(2, 1)];
            if det == 0.0 || !det.is_finite() {
                break;
            }
            let dy = (h[(2, 2)] * g.y - h[(1, 2)] * g.z) / det;
            let dz = (h[(1, 1)] * g.z - h[(2, 1)] * g.y) / det;
            // keep the step bounded so the iteration stays above the chip
            let scale = (0.5 * z / dz.abs().max(1e-300)).min(1.0);
            y -= dy * scale;
            z -= dz * scale;
            if dy.abs() < 1e-10 && dz.abs() < 1e-10 {
                return Ok(AxisLine { y, z });
            }
        }
        Err(TrapError::Config(format!(
            "layout `{}`: RF null not found near height {}",
            self.name, self.ion_height
        )))
    }
}

/// Potential along the RF null for a given voltage set, including the
/// pseudopotential expressed as volts per unit charge.
pub struct LayoutProfile<'a> {
    layout: &'a TrapLayout,
    ground: f64,
    weights: Vec<(&'a ElectrodeGeometry, f64)>,
    /// Pseudopotential scale in V per (1/um)^2 of RF basis gradient.
    pseudo: Option<f64>,
    axis: AxisLine,
}

impl LayoutProfile<'_> {
    fn pseudo_slope(&self, s: f64, c: f64) -> Result<f64, TrapError> {
        let p = self.axis.at(s);
        let g = self.layout.rf_basis_gradient(p)?;
        let h = self.layout.rf_basis_hessian(p)?;
        Ok(2.0 * c * g.dot(&h.column(0)))
    }

    pub fn axis(&self) -> AxisLine {
        self.axis
    }
}

impl AxialPotential for LayoutProfile<'_> {
    fn eval(&self, s: f64) -> Result<(f64, f64, f64), TrapError> {
        let p = self.axis.at(s);
        let (mut value, mut slope, mut curv) = (self.ground, 0.0, 0.0);
        for (e, w) in &self.weights {
            for r in e.rects() {
                value += w * rect_potential(r, p);
                slope += w * rect_gradient(r, p).x;
                curv += w * rect_hessian(r, p)[(0, 0)];
            }
        }
        if let Some(c) = self.pseudo {
            let g = self.layout.rf_basis_gradient(p)?;
            value += c * g.norm_squared();
            slope += self.pseudo_slope(s, c)?;
            let h = 1e-3;
            curv += (self.pseudo_slope(s + h, c)? - self.pseudo_slope(s - h, c)?) / (2.0 * h);
        }
        Ok((value, slope, curv))
    }
}
