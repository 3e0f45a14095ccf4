use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_range, leakage_decay, CircuitError, CircuitNode, DecayLaw, Result};

/// Symmetric mutual capacitances (F) between electrodes and the RF/ground rails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork", into = "RawNetwork")]
pub struct CouplingNetwork {
    terminals: Vec<String>,
    c: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawNetwork {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terminals: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix_pf: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pairs_pf: Option<Vec<(String, String, f64)>>,
}

impl TryFrom<RawNetwork> for CouplingNetwork {
    type Error = CircuitError;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        match (raw.terminals, raw.matrix_pf, raw.pairs_pf) {
            (Some(t), Some(m), None) => {
                let m: Vec<Vec<f64>> = m
                    .into_iter()
                    .map(|row| row.into_iter().map(|c| c * 1e-12).collect())
                    .collect();
                Self::from_matrix(t, &m)
            }
            (None, None, Some(p)) => {
                let p: Vec<_> = p.into_iter().map(|(a, b, c)| (a, b, c * 1e-12)).collect();
                Self::from_pairs(p)
            }
            _ => Err(CircuitError::Config(
                "coupling network needs either `terminals` + `matrix_pf` or `pairs_pf`".into(),
            )),
        }
    }
}

impl From<CouplingNetwork> for RawNetwork {
    fn from(n: CouplingNetwork) -> Self {
        let m = (0..n.terminals.len())
            .map(|i| (0..n.terminals.len()).map(|j| n.c[(i, j)] * 1e12).collect())
            .collect();
        RawNetwork {
            terminals: Some(n.terminals),
            matrix_pf: Some(m),
            pairs_pf: None,
        }
    }
}

impl CouplingNetwork {
    pub fn empty() -> Self {
        Self {
            terminals: Vec::new(),
            c: DMatrix::zeros(0, 0),
        }
    }

    /// Build from `(a, b, C)` entries; repeated pairs must agree.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, S, f64)>) -> Result<Self> {
        let pairs: Vec<(String, String, f64)> =
            pairs.into_iter().map(|(a, b, c)| (a.into(), b.into(), c)).collect();
        let mut terminals: Vec<String> = Vec::new();
        for (a, b, _) in &pairs {
            for t in [a, b] {
                if !terminals.contains(t) {
                    terminals.push(t.clone());
                }
            }
        }
        let n = terminals.len();
        let mut c = DMatrix::zeros(n, n);
        let pos = |t: &str| terminals.iter().position(|x| x == t).unwrap();
        for (a, b, v) in &pairs {
            if a == b {
                return Err(CircuitError::Config(format!("self coupling on `{a}`")));
            }
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(CircuitError::Config(format!("negative coupling {a}-{b}: {v}")));
            }
            let (i, j) = (pos(a), pos(b));
            if c[(i, j)] != 0.0 && c[(i, j)] != *v {
                return Err(CircuitError::Config(format!("conflicting entries for {a}-{b}")));
            }
            c[(i, j)] = *v;
            c[(j, i)] = *v;
        }
        Ok(Self { terminals, c })
    }

    /// Build from a full matrix (F). The diagonal is ignored.
    pub fn from_matrix(terminals: Vec<String>, m: &[Vec<f64>]) -> Result<Self> {
        let n = terminals.len();
        if m.len() != n || m.iter().any(|r| r.len() != n) {
            return Err(CircuitError::Config(format!("coupling matrix must be {n}x{n}")));
        }
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (a, b) = (m[i][j], m[j][i]);
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(CircuitError::Config(format!(
                        "negative coupling {}-{}: {a}",
                        terminals[i], terminals[j]
                    )));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                    return Err(CircuitError::Config(format!(
                        "coupling matrix not symmetric at {}-{}",
                        terminals[i], terminals[j]
                    )));
                }
                c[(i, j)] = a;
            }
        }
        for i in 0..n {
            if terminals[i + 1..].contains(&terminals[i]) {
                return Err(CircuitError::Config(format!("duplicate terminal `{}`", terminals[i])));
            }
        }
        Ok(Self { terminals, c })
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    /// Mutual capacitance between two terminals (0 when either is absent).
    pub fn get(&self, a: &str, b: &str) -> f64 {
        match (self.index(a), self.index(b)) {
            (Some(i), Some(j)) if i != j => self.c[(i, j)],
            _ => 0.0,
        }
    }

    fn index(&self, t: &str) -> Option<usize> {
        self.terminals.iter().position(|x| x == t)
    }

    /// Sum of the couplings of `t` to every other terminal.
    pub fn total_coupling(&self, t: &str) -> f64 {
        self.index(t).map_or(0.0, |i| self.c.row(i).sum())
    }
}

struct Partition {
    /// Positions in `nodes` of coupled floating electrodes.
    floating: Vec<usize>,
    k_ff: DMatrix<f64>,
}

fn partition(nodes: &[CircuitNode], net: &CouplingNetwork) -> Partition {
    let floating: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.is_open() && net.total_coupling(&n.id) > 0.0)
        .map(|(i, _)| i)
        .collect();
    let m = floating.len();
    let mut k_ff = DMatrix::zeros(m, m);
    for (a, &i) in floating.iter().enumerate() {
        let id = &nodes[i].id;
        k_ff[(a, a)] = nodes[i].bank.total() + net.total_coupling(id);
        for (b, &j) in floating.iter().enumerate() {
            if a != b {
                k_ff[(a, b)] = -net.get(id, &nodes[j].id);
            }
        }
    }
    Partition { floating, k_ff }
}

fn solve(k: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    k.lu()
        .solve(&rhs)
        .ok_or_else(|| CircuitError::Config("singular capacitance matrix".into()))
}

/// Advance every open node by `dt` seconds with driven nodes and rails held
/// fixed. Floating nodes with no coupling follow [`leakage_decay`] exactly;
/// coupled ones share the leaked charge through the Maxwell capacitance matrix.
pub fn coupled_decay_step(nodes: &mut [CircuitNode], net: &CouplingNetwork, dt: f64) -> Result<()> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(CircuitError::Config(format!("time step must be >= 0, got {dt}")));
    }
    let part = partition(nodes, net);
    for (i, n) in nodes.iter_mut().enumerate() {
        if n.is_open() && !part.floating.contains(&i) {
            n.v = leakage_decay(n, dt);
        }
    }
    if part.floating.is_empty() || dt == 0.0 {
        return Ok(());
    }
    let dq = DVector::from_iterator(
        part.floating.len(),
        part.floating.iter().map(|&i| {
            let n = &nodes[i];
            let current = match n.decay {
                DecayLaw::Linear => n.leak * sign(n.v),
                DecayLaw::Exponential { leak_resistance } => n.v / leak_resistance,
            };
            -current * dt
        }),
    );
    let dv = solve(part.k_ff, dq)?;
    for (a, &i) in part.floating.iter().enumerate() {
        nodes[i].v += dv[a];
    }
    Ok(())
}

/// Set the leakage current of every open node so that, under the linear law,
/// each one decays at `rate` V/s with the coupled nodes floating together.
pub fn calibrate_linear_decay(nodes: &mut [CircuitNode], net: &CouplingNetwork, rate: f64) -> Result<()> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(CircuitError::Config(format!("decay rate must be >= 0, got {rate}")));
    }
    let part = partition(nodes, net);
    for (i, n) in nodes.iter_mut().enumerate() {
        if n.is_open() && !part.floating.contains(&i) {
            n.leak = rate * n.bank.total();
        }
    }
    if part.floating.is_empty() {
        return Ok(());
    }
    let slopes = DVector::from_iterator(
        part.floating.len(),
        part.floating.iter().map(|&i| rate * sign(nodes[i].v)),
    );
    let currents = &part.k_ff * slopes;
    for (a, &i) in part.floating.iter().enumerate() {
        nodes[i].leak = currents[a].abs();
    }
    Ok(())
}

/// Step closed nodes to new voltages and let the coupled floating nodes follow
/// by charge conservation. Rails stay at 0 V.
pub fn driven_step(
    nodes: &mut [CircuitNode],
    net: &CouplingNetwork,
    changes: &BTreeMap<String, f64>,
) -> Result<()> {
    let mut delta: BTreeMap<&str, f64> = BTreeMap::new();
    for (id, &v) in changes {
        match nodes.iter_mut().find(|n| &n.id == id) {
            Some(n) if n.is_open() => {
                return Err(CircuitError::Config(format!("`{id}` is floating, not driven")));
            }
            Some(n) => {
                check_range(v)?;
                delta.insert(id, v - n.v);
                n.v = v;
            }
            None => return Err(CircuitError::UnknownNode(id.clone())),
        }
    }
    let part = partition(nodes, net);
    if part.floating.is_empty() {
        return Ok(());
    }
    let rhs = DVector::from_iterator(
        part.floating.len(),
        part.floating.iter().map(|&i| {
            delta
                .iter()
                .map(|(d, dv)| net.get(&nodes[i].id, d) * dv)
                .sum::<f64>()
        }),
    );
    let dv = solve(part.k_ff, rhs)?;
    for (a, &i) in part.floating.iter().enumerate() {
        nodes[i].v += dv[a];
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
