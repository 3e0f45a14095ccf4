use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrapError;

/// Id of the implicit grounded plane that fills everything not covered by an
/// explicit electrode. Giving it a voltage offsets the whole chip.
pub const GROUND_ID: &str = "gnd";

/// Output range of the multiplexer (V).
pub const MAX_ABS_VOLTAGE: f64 = 10.0;

/// Electrode id to voltage (V). Every entry satisfies `|v| <= 10 V`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct VoltageSet {
    volts: BTreeMap<String, f64>,
}

impl VoltageSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, K>(pairs: I) -> Result<Self, TrapError>
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        let mut set = Self::new();
        for (k, v) in pairs {
            set.set(k, v)?;
        }
        Ok(set)
    }

    pub fn set(&mut self, id: impl Into<String>, volts: f64) -> Result<(), TrapError> {
        let id = id.into();
        if !volts.is_finite() || volts.abs() > MAX_ABS_VOLTAGE {
            return Err(TrapError::VoltageRange {
                id,
                volts,
                limit: MAX_ABS_VOLTAGE,
            });
        }
        self.volts.insert(id, volts);
        Ok(())
    }

    /// Voltage of `id`, zero when absent.
    pub fn get(&self, id: &str) -> f64 {
        self.volts.get(id).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.volts.contains_key(id)
    }

    pub fn ground(&self) -> f64 {
        self.get(GROUND_ID)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.volts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.volts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volts.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.volts.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Entry-wise sum; ids missing on either side count as 0 V.
    pub fn added(&self, other: &VoltageSet) -> Result<VoltageSet, TrapError> {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.set(k, self.get(k) + v)?;
        }
        Ok(out)
    }
}

impl TryFrom<BTreeMap<String, f64>> for VoltageSet {
    type Error = TrapError;

    fn try_from(map: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        VoltageSet::from_pairs(map)
    }
}

impl From<VoltageSet> for BTreeMap<String, f64> {
    fn from(v: VoltageSet) -> Self {
        v.volts
    }
}
