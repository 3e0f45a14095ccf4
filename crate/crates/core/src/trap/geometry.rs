use serde::{Deserialize, Serialize};

use super::TrapError;

/// A point in the chip frame (um). `z` is the height above the electrode plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Axis-aligned rectangle in the electrode plane, `[x1, x2] x [y1, y2]` in um.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
}

impl Rect {
    pub fn new(x1: f64, x2: f64, y1: f64, y2: f64) -> Result<Self, TrapError> {
        let all_finite = [x1, x2, y1, y2].iter().all(|v| v.is_finite());
        if !all_finite || x2 <= x1 || y2 <= y1 {
            return Err(TrapError::Geometry(format!(
                "degenerate rectangle [{x1}, {x2}] x [{y1}, {y2}]"
            )));
        }
        Ok(Self { x1, x2, y1, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// True when the interiors intersect. Shared edges do not count.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x1 < other.x2 && other.x1 < self.x2 && self.y1 < other.y2 && other.y1 < self.y2
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Rect {
        Rect {
            x1: self.x1 + dx,
            x2: self.x2 + dx,
            y1: self.y1 + dy,
            y2: self.y2 + dy,
        }
    }
}

impl TryFrom<[f64; 4]> for Rect {
    type Error = TrapError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x1, r.x2, r.y1, r.y2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElectrodeRole {
    Rf,
    DcInner,
    DcDynamic,
    Shim,
    Ground,
}

impl ElectrodeRole {
    /// DC-controlled roles, i.e. the electrodes a voltage set must cover.
    pub fn is_dc(self) -> bool {
        matches!(self, Self::DcInner | Self::DcDynamic | Self::Shim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawElectrode")]
pub struct ElectrodeGeometry {
    id: String,
    role: ElectrodeRole,
    rects: Vec<Rect>,
}

#[derive(Deserialize)]
struct RawElectrode {
    id: String,
    role: ElectrodeRole,
    rects: Vec<Rect>,
}

impl TryFrom<RawElectrode> for ElectrodeGeometry {
    type Error = TrapError;

    fn try_from(raw: RawElectrode) -> Result<Self, Self::Error> {
        ElectrodeGeometry::new(raw.id, raw.role, raw.rects)
    }
}

impl ElectrodeGeometry {
    pub fn new(
        id: impl Into<String>,
        role: ElectrodeRole,
        rects: Vec<Rect>,
    ) -> Result<Self, TrapError> {
        let id = id.into();
        if rects.is_empty() {
            return Err(TrapError::Geometry(format!("electrode `{id}` has no rectangles")));
        }
        for (i, a) in rects.iter().enumerate() {
            for b in &rects[i + 1..] {
                if a.overlaps(b) {
                    return Err(TrapError::Geometry(format!(
                        "electrode `{id}` has overlapping rectangles {a:?} and {b:?}"
                    )));
                }
            }
        }
        Ok(Self { id, role, rects })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn role(&self) -> ElectrodeRole {
        self.role
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    /// Area-weighted axial centre (um).
    pub fn axial_center(&self) -> f64 {
        let (sum, area) = self.rects.iter().fold((0.0, 0.0), |(s, a), r| {
            let ar = r.width() * r.height();
            (s + r.center().0 * ar, a + ar)
        });
        sum / area
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Vec<Rect> {
        self.rects.iter().map(|r| r.translated(dx, dy)).collect()
    }
}
