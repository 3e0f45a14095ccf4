use std::collections::BTreeMap;

use ionmux::circuit::{
    charge_injection, coupled_decay_step, driven_step, filter_response, injection_drop,
    leakage_decay, suppression_factor, CapacitorBank, CircuitError, CircuitNode, CircuitPreset,
    CouplingNetwork, FilterSpec, SwitchState, C_EXT_BOARD,
};
use ionmux::trap::ElectrodeRole;
use proptest::prelude::*;

fn trap1_nodes(preset: &CircuitPreset) -> Vec<CircuitNode> {
    ["1", "2", "3", "4", "5"]
        .iter()
        .map(|id| preset.node(id, ElectrodeRole::DcInner).unwrap())
        .collect()
}

fn set_state(nodes: &mut [CircuitNode], closed: &[(&str, f64)], open: &[(&str, f64)]) {
    for n in nodes.iter_mut() {
        if let Some((_, v)) = closed.iter().find(|(id, _)| *id == n.id) {
            n.close(format!("dac-{}", n.id), *v).unwrap();
        }
        if let Some((_, v)) = open.iter().find(|(id, _)| *id == n.id) {
            n.switch = SwitchState::Open;
            n.v = *v;
        }
    }
}

#[test]
fn reference_injection_numbers() {
    let p = CircuitPreset::preset("trap1").unwrap();
    let bank = p.bank("3", ElectrodeRole::DcInner).unwrap();
    assert!((bank.total() - 51e-12).abs() < 1e-24);
    let v_gate = p.v_gate(2.67);
    let after = charge_injection(&bank, 2.67, v_gate).unwrap();
    assert!((2.67 - after - 0.29).abs() <= 1e-6);
    let drop_ext = injection_drop(&bank.with_ext(C_EXT_BOARD), v_gate).unwrap();
    assert!((drop_ext - 0.38e-3).abs() < 0.01e-3);
    let s = suppression_factor(&bank, C_EXT_BOARD).unwrap();
    assert!((s - 765.0).abs() <= 1.0, "suppression {s}");
}

#[test]
fn board_capacitor_decay_is_below_bound() {
    let bank = CapacitorBank::new(0.0, 50e-12, 1e-12, C_EXT_BOARD).unwrap();
    let mut n = CircuitNode::new("s", bank, 23.5e-15);
    n.v = 3.0;
    let per_min = n.v - leakage_decay(&n, 60.0);
    assert!((per_min - 36e-6).abs() < 1e-6);
    assert!(per_min < 2.5e-3);
}

#[test]
fn network_validation() {
    let t = vec!["a".to_string(), "b".to_string()];
    let asym = vec![vec![0.0, 1e-12], vec![2e-12, 0.0]];
    assert!(matches!(CouplingNetwork::from_matrix(t.clone(), &asym), Err(CircuitError::Config(_))));
    let neg = vec![vec![0.0, -1e-12], vec![-1e-12, 0.0]];
    assert!(CouplingNetwork::from_matrix(t.clone(), &neg).is_err());
    let ok = vec![vec![0.0, 1e-12], vec![1e-12, 0.0]];
    assert!(CouplingNetwork::from_matrix(t, &ok).is_ok());
    let json = r#"{"terminals":["a","b"],"matrix_pf":[[0,1],[1.5,0]]}"#;
    assert!(serde_json::from_str::<CouplingNetwork>(json).is_err());
}

#[test]
fn shipped_coupling_network() {
    let p = CircuitPreset::preset("trap1").unwrap();
    let net = &p.coupling;
    let table = [
        ("gnd", "rf", 1.1),
        ("rf", "4", 0.22),
        ("4", "3", 0.20),
        ("3", "1", 0.32),
        ("1", "2", 0.32),
        ("2", "5", 0.20),
        ("5", "rf", 0.22),
    ];
    for (a, b, c) in table {
        assert!((net.get(a, b) - c * 1e-12).abs() < 1e-24);
        assert_eq!(net.get(a, b), net.get(b, a));
    }
    assert_eq!(net.get("1", "4"), 0.0);
}

#[test]
fn equilibrium_without_leak_is_static() {
    let mut p = CircuitPreset::preset("trap1").unwrap();
    p.leak_fa = 0.0;
    let mut nodes = trap1_nodes(&p);
    for n in nodes.iter_mut() {
        n.v = 1.5;
    }
    let before: Vec<f64> = nodes.iter().map(|n| n.v).collect();
    for _ in 0..100 {
        coupled_decay_step(&mut nodes, &p.coupling, 1e-3).unwrap();
    }
    let after: Vec<f64> = nodes.iter().map(|n| n.v).collect();
    assert_eq!(before, after);
}

#[test]
fn isolated_charge_is_conserved() {
    let net = CouplingNetwork::from_pairs([("a", "b", 2e-12)]).unwrap();
    let bank = CapacitorBank::new(0.0, 0.0, 0.0, 0.0).unwrap();
    let mut nodes = vec![CircuitNode::new("a", bank, 0.0), CircuitNode::new("b", bank, 0.0)];
    nodes[0].close("d0", 3.0).unwrap();
    nodes[1].v = 1.0;
    for _ in 0..1000 {
        coupled_decay_step(&mut nodes, &net, 1e-3).unwrap();
    }
    assert_eq!(nodes[1].v, 1.0);

    // stepping the driven side moves the floating side by the same amount
    let change = BTreeMap::from([("a".to_string(), 4.0)]);
    driven_step(&mut nodes, &net, &change).unwrap();
    assert!((nodes[1].v - 2.0).abs() < 1e-15);
    let bad = BTreeMap::from([("b".to_string(), 0.0)]);
    assert!(driven_step(&mut nodes, &net, &bad).is_err());
}

fn mean_rate(nodes: &mut [CircuitNode], net: &CouplingNetwork, id: &str, seconds: f64) -> f64 {
    let dt = 1e-3;
    let steps = (seconds / dt).round() as usize;
    let i = nodes.iter().position(|n| n.id == id).unwrap();
    let v0 = nodes[i].v;
    for _ in 0..steps {
        coupled_decay_step(nodes, net, dt).unwrap();
    }
    (v0 - nodes[i].v) / (steps as f64 * dt)
}

#[test]
fn joint_decay_reproduces_calibrated_rate() {
    let target = 0.08 / 60.0;
    let mut p = CircuitPreset::preset("trap1").unwrap();
    p.leak_fa = 1.0;
    let closed = [("1", -2.02), ("4", 0.0), ("5", 0.0)];

    let mut single = trap1_nodes(&p);
    set_state(&mut single, &[closed[0], closed[1], closed[2], ("3", 2.67)], &[("2", 2.28)]);
    let unit_rate = mean_rate(&mut single, &p.coupling, "2", 30.0);
    // the rate is linear in the leakage current
    p.leak_fa = target / unit_rate;

    let mut joint = trap1_nodes(&p);
    set_state(&mut joint, &closed, &[("2", 2.28), ("3", 3.75)]);
    let dt = 1e-3;
    let v0: Vec<f64> = joint.iter().map(|n| n.v).collect();
    for _ in 0..30_000 {
        coupled_decay_step(&mut joint, &p.coupling, dt).unwrap();
    }
    for (i, id) in [(1, "2"), (2, "3")] {
        let per_min = (v0[i] - joint[i].v) / 30.0 * 60.0;
        assert!((per_min - 0.08).abs() <= 0.02, "electrode {id}: {per_min} V/min");
    }
}

#[test]
fn filter_identity() {
    for (r, c) in [(250.0, 33e-9), (1.0, 1.0), (1e6, 1e-12)] {
        let f = filter_response(&FilterSpec::new(r, c).unwrap());
        assert!((f.cutoff_hz * 2.0 * std::f64::consts::PI * r * c - 1.0).abs() <= 1e-12);
    }
}

fn arb_bank() -> impl Strategy<Value = CapacitorBank> {
    (0.0..5e-12f64, 0.0..100e-12f64, 1e-13..5e-12f64, prop_oneof![Just(0.0), 0.0..100e-9f64])
        .prop_map(|(e, i, p, x)| CapacitorBank::new(e, i, p, x).unwrap())
}

proptest! {
    #[test]
    fn injection_conserves_charge(bank in arb_bank(), v_dac in -10.0..10.0f64, v_gate in -20.0..20.0f64) {
        let after = charge_injection(&bank, v_dac, v_gate).unwrap();
        let q_before = v_dac * (bank.c_ele + bank.c_int + bank.c_ext) + (v_dac - v_gate) * bank.c_para;
        let q_after = after * bank.total();
        prop_assert!((q_before - q_after).abs() <= 1e-12 * q_before.abs().max(q_after.abs()).max(1e-30));
    }

    #[test]
    fn suppression_is_monotone(bank in arb_bank(), a in 0.0..1e-7f64, b in 0.0..1e-7f64, v_gate in 0.1..20.0f64) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let d_lo = injection_drop(&bank.with_ext(lo), v_gate).unwrap();
        let d_hi = injection_drop(&bank.with_ext(hi), v_gate).unwrap();
        prop_assert!(d_hi < d_lo);
    }

    #[test]
    fn decay_is_additive_in_time(v in -10.0..10.0f64, leak in 0.0..1e-12f64, dt in 0.0..100.0f64) {
        let bank = CapacitorBank::new(0.0, 50e-12, 1e-12, 0.0).unwrap();
        let mut n = CircuitNode::new("e", bank, leak);
        n.v = v;
        let two = leakage_decay(&n, 2.0 * dt);
        n.v = leakage_decay(&n, dt);
        let halves = leakage_decay(&n, dt);
        // equal up to rounding of the two subtractions
        prop_assert!((two - halves).abs() <= 4.0 * f64::EPSILON * v.abs().max(f64::MIN_POSITIVE));
        prop_assert_eq!(leakage_decay(&n, 0.0), n.v);
    }

    #[test]
    fn uncoupled_network_matches_plain_decay(
        volts in proptest::collection::vec(-10.0..10.0f64, 1..6),
        leak in 0.0..1e-12f64,
        dt in 0.0..10.0f64,
    ) {
        let bank = CapacitorBank::new(0.1e-12, 15e-12, 1e-12, 0.0).unwrap();
        let mut nodes: Vec<CircuitNode> = volts.iter().enumerate().map(|(i, &v)| {
            let mut n = CircuitNode::new(format!("e{i}"), bank, leak);
            n.v = v;
            n
        }).collect();
        let expect: Vec<f64> = nodes.iter().map(|n| leakage_decay(n, dt)).collect();
        let pairs: Vec<(String, String, f64)> = (1..nodes.len())
            .map(|i| (format!("e{}", i - 1), format!("e{i}"), 0.0))
            .collect();
        let net = if pairs.is_empty() { CouplingNetwork::empty() } else { CouplingNetwork::from_pairs(pairs).unwrap() };
        coupled_decay_step(&mut nodes, &net, dt).unwrap();
        let got: Vec<f64> = nodes.iter().map(|n| n.v).collect();
        prop_assert_eq!(got, expect);
    }
}
