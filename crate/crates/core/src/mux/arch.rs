use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ArchitectureKind {
    /// One DAC line per electrode.
    Direct,
    /// Electrodes of equal function share a DAC every `period` electrodes.
    /// With `hold` the co-wired lines can be parked on a hold bank.
    CoWired { period: usize, hold: bool },
    /// Dual-bank dynamic electrodes plus sample-and-hold shims behind switches.
    Multiplexed { period: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WiringArchitecture {
    pub kind: ArchitectureKind,
    pub dac_count: usize,
    pub dynamic_outputs: usize,
    pub shim_outputs: usize,
    pub digital_lines: usize,
    /// Trapping sites that can each hold one crystal.
    pub unit_cells: usize,
}

impl WiringArchitecture {
    /// 22 DACs (18 dynamic in two banks of 9, one shared shim DAC, three
    /// spare) serving 96 dynamic and 98 shim outputs.
    pub fn multiplexed_preset() -> Self {
        Self {
            kind: ArchitectureKind::Multiplexed { period: 9 },
            dac_count: 22,
            dynamic_outputs: 96,
            shim_outputs: 98,
            digital_lines: 15,
            unit_cells: 48 / 9,
        }
    }

    pub fn direct_preset() -> Self {
        Self {
            kind: ArchitectureKind::Direct,
            dac_count: 194,
            dynamic_outputs: 96,
            shim_outputs: 98,
            digital_lines: 0,
            unit_cells: 48 / 9,
        }
    }

    pub fn with_unit_cells(mut self, n: usize) -> Self {
        self.unit_cells = n;
        self
    }

    pub fn outputs(&self) -> usize {
        self.dynamic_outputs + self.shim_outputs
    }

    /// Wires entering the cryostat.
    pub fn external_lines(&self) -> usize {
        match self.kind {
            ArchitectureKind::Direct => self.outputs(),
            ArchitectureKind::CoWired { .. } | ArchitectureKind::Multiplexed { .. } => {
                self.dac_count + self.digital_lines
            }
        }
    }

    /// Whether individual crystals can be held while others move.
    pub fn can_hold(&self) -> bool {
        match self.kind {
            ArchitectureKind::Direct | ArchitectureKind::Multiplexed { .. } => true,
            ArchitectureKind::CoWired { hold, .. } => hold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconfigVerdict {
    pub feasible: bool,
    /// Adjacent swaps `(i, i + 1)` of crystal positions, applied in order.
    pub swaps: Vec<(usize, usize)>,
    pub reason: Option<String>,
}

/// Can the crystals be rearranged so that position `i` ends up holding
/// crystal `target[i]`, starting from crystal `i` at position `i`?
pub fn reconfig_check(arch: &WiringArchitecture, target: &[usize]) -> ReconfigVerdict {
    let m = target.len();
    let infeasible = |reason: String| ReconfigVerdict {
        feasible: false,
        swaps: Vec::new(),
        reason: Some(reason),
    };
    let mut seen = vec![false; m];
    for &t in target {
        if t >= m || seen[t] {
            return infeasible(format!("{target:?} is not a permutation of 0..{m}"));
        }
        seen[t] = true;
    }
    if m > arch.unit_cells {
        return infeasible(format!("{m} crystals exceed {} unit cells", arch.unit_cells));
    }
    let identity = target.iter().enumerate().all(|(i, &t)| i == t);
    if !identity && !arch.can_hold() {
        return infeasible("co-wired electrodes move every crystal together; only the identity is reachable".into());
    }
    // bubble sort target -> identity, then undo: each swap is its own inverse
    let mut work = target.to_vec();
    let mut sorting = Vec::new();
    for end in (1..m).rev() {
        for i in 0..end {
            if work[i] > work[i + 1] {
                work.swap(i, i + 1);
                sorting.push((i, i + 1));
            }
        }
    }
    sorting.reverse();
    ReconfigVerdict {
        feasible: true,
        swaps: sorting,
        reason: None,
    }
}

/// Apply a swap schedule to the identity arrangement of `m` crystals.
pub fn simulate_swaps(m: usize, swaps: &[(usize, usize)]) -> Vec<usize> {
    let mut v: Vec<usize> = (0..m).collect();
    for &(i, j) in swaps {
        v.swap(i, j);
    }
    v
}
