use ionmux::circuit::CircuitPreset;
use ionmux::mux::{
    parse_script, plan_refresh, reconfig_check, simulate_swaps, write_events_csv, ArchitectureKind,
    Bank, Command, EventKind, FrameFormat, MuxError, Opcode, RefreshInputs, Route, SwitchMatrix,
    WiringArchitecture,
};
use ionmux::mux::Frame;
use ionmux::TrapLayout;
use proptest::prelude::*;

fn trap2_matrix() -> SwitchMatrix {
    let layout = TrapLayout::preset("trap2").unwrap();
    let preset = CircuitPreset::preset("trap2").unwrap();
    SwitchMatrix::for_layout(&layout, &preset, 9).unwrap()
}

fn trap1_matrix() -> SwitchMatrix {
    let layout = TrapLayout::preset("trap1").unwrap();
    let preset = CircuitPreset::preset("trap1").unwrap();
    SwitchMatrix::for_layout(&layout, &preset, 9).unwrap()
}

fn reference_refresh(n: usize) -> RefreshInputs {
    RefreshInputs {
        electrodes: n,
        frame_time: FrameFormat::default().frame_time(),
        settle_time: 41e-6,
        error_budget: 1e-4,
        gate_time: 500e-6,
        freq_sensitivity: 2.0 * std::f64::consts::PI * 100.0,
        decay_rate: 4.0,
        min_refresh_hz: 20.0,
    }
}

#[test]
fn multiplexed_wiring_matches_the_architecture() {
    let m = trap2_matrix();
    assert_eq!(m.dac_count(), 20);
    let arch = WiringArchitecture::multiplexed_preset();
    assert!(m.dac_count() <= arch.dac_count);
    assert_eq!(m.route("DT00").unwrap(), Route::Dual { a: 0, b: 9 });
    assert_eq!(m.route("DT09").unwrap(), Route::Dual { a: 0, b: 9 });
    assert_eq!(m.route("DB13").unwrap(), Route::Dual { a: 4, b: 13 });
    assert_eq!(m.route("ST17").unwrap(), Route::Single { dac: 18 });
    assert_eq!(m.route("C").unwrap(), Route::Single { dac: 19 });
    assert!(arch.external_lines() < WiringArchitecture::direct_preset().external_lines());
}

#[test]
fn idempotent_open_and_event_pairing() {
    let mut m = trap1_matrix();
    m.set_dac(2, 2.67).unwrap();
    assert!(m.apply(&Command::Open { electrode: "3".into() }).unwrap().is_empty());
    let ev = m.apply(&Command::Close { electrode: "3".into(), dac: 2 }).unwrap();
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].kind, EventKind::Reconnect);
    assert_eq!(ev[0].v_after, 2.67);
    assert!(m.apply(&Command::Close { electrode: "3".into(), dac: 2 }).unwrap().is_empty());
    let ev = m.apply(&Command::Open { electrode: "3".into() }).unwrap();
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].kind, EventKind::Injection);
    assert!((ev[0].v_before - ev[0].v_after - 0.29).abs() < 1e-6);
}

#[test]
fn illegal_transitions() {
    let mut m = trap2_matrix();
    m.apply(&Command::Close { electrode: "DT03".into(), dac: 3 }).unwrap();
    let r = m.apply(&Command::Close { electrode: "DT03".into(), dac: 12 });
    assert!(matches!(r, Err(MuxError::IllegalTransition(_))));
    let r = m.apply(&Command::Close { electrode: "DT03".into(), dac: 5 });
    assert!(matches!(r, Err(MuxError::IllegalTransition(_))));
    let r = m.apply(&Command::Bank { electrode: "ST03".into(), bank: Bank::A });
    assert!(matches!(r, Err(MuxError::IllegalTransition(_))));
    assert!(matches!(
        m.apply(&Command::Open { electrode: "nope".into() }),
        Err(MuxError::UnknownElectrode(_))
    ));
}

#[test]
fn bank_swap_leaves_shims_alone() {
    let mut m = trap2_matrix();
    m.set_dac(4, 1.5).unwrap();
    m.set_dac(13, -0.7).unwrap();
    m.set_dac(18, 0.3).unwrap();
    let script = "close ST05 dac18\nopen ST05\nbank DT04 A\nwait 0.5\nbank DT04 B\nbank DT04 B\nbank DT04 A\n";
    let cmds = parse_script(script).unwrap();
    let shim_before_swaps = {
        let mut probe = m.clone();
        probe.run(&cmds[..2]).unwrap();
        probe.node("ST05").unwrap().clone()
    };
    let ev = m.run(&cmds).unwrap();
    let kinds: Vec<_> = ev.iter().map(|e| (e.electrode.as_str(), e.kind)).collect();
    assert_eq!(
        kinds,
        vec![
            ("ST05", EventKind::Reconnect),
            ("ST05", EventKind::Injection),
            ("DT04", EventKind::Reconnect),
            ("DT04", EventKind::BankSwitch),
            ("DT04", EventKind::BankSwitch),
        ]
    );
    assert_eq!(m.node("DT04").unwrap().v, 1.5);
    let shim = m.node("ST05").unwrap();
    assert_eq!(shim.switch, shim_before_swaps.switch);
    assert!(shim.v <= shim_before_swaps.v && shim.v > shim_before_swaps.v - 1e-6);
}

#[test]
fn cold_commands_are_flagged() {
    let mut m = trap1_matrix();
    m.set_temperature(40.0);
    m.apply(&Command::Close { electrode: "1".into(), dac: 0 }).unwrap();
    assert_eq!(m.warnings().len(), 1);
    m.set_temperature(80.0);
    m.apply(&Command::Open { electrode: "1".into() }).unwrap();
    assert_eq!(m.warnings().len(), 1);
}

#[test]
fn readback_routes_through_channel_gain() {
    let mut m = trap2_matrix();
    assert_eq!(m.debug_readback("DT00").unwrap(), 0.0);
    m.set_dac(0, 2.5).unwrap();
    m.apply(&Command::Bank { electrode: "DT00".into(), bank: Bank::A }).unwrap();
    assert!((m.debug_readback("DT00").unwrap() - 2.375).abs() < 1e-12);
    assert!(m.debug_readback("XX").is_err());

    let mut m = trap1_matrix();
    m.set_dac(1, 2.28).unwrap();
    m.run(&parse_script("close 2 1\nopen 2\nwait 90000").unwrap()).unwrap();
    let node_v = m.node("2").unwrap().v;
    assert!(node_v < 2.28 - 0.29);
    assert_eq!(m.debug_readback("2").unwrap(), node_v);
}

#[test]
fn script_parsing() {
    let cmds = parse_script("# header\nclose 3 dac2\n\nopen 3  # trailing\nbank D1 b\nwait 1.5\n").unwrap();
    assert_eq!(cmds.len(), 4);
    assert_eq!(cmds[0], Command::Close { electrode: "3".into(), dac: 2 });
    assert_eq!(cmds[2], Command::Bank { electrode: "D1".into(), bank: Bank::B });
    for bad in ["shut 3", "close 3", "bank 3 C", "wait -1", "wait x"] {
        assert!(matches!(parse_script(bad), Err(MuxError::Parse { line: 1, .. })), "{bad}");
    }
    assert!(parse_script("").unwrap().is_empty());
}

#[test]
fn event_csv_layout() {
    let mut m = trap1_matrix();
    let ev = m.run(&parse_script("close 1 0\nopen 1").unwrap()).unwrap();
    let mut buf = Vec::new();
    write_events_csv(&ev, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "time_s,electrode,event,v_before,v_after");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].contains(",1,injection,"));
}

#[test]
fn refresh_plans() {
    let one = plan_refresh(&reference_refresh(1)).unwrap();
    assert!(one.feasible);
    assert_eq!(one.cycle_period, one.service_time);

    let shims = plan_refresh(&reference_refresh(98)).unwrap();
    assert!((shims.cycle_period - 10.29e-3).abs() < 0.01e-3, "{}", shims.cycle_period);
    assert!((shims.refresh_hz - 97.2).abs() < 0.2);
    assert!(shims.feasible);

    let mut slow = reference_refresh(98);
    slow.settle_time = 50e-3 / 98.0 - 2.0 * slow.frame_time;
    let p = plan_refresh(&slow).unwrap();
    assert!((p.max_drift_hz - 20.0).abs() < 1e-9);
    assert!((p.error - 1e-4).abs() < 1e-15);

    let mut tight = reference_refresh(98);
    tight.error_budget = 1e-7;
    let p = plan_refresh(&tight).unwrap();
    assert!(!p.feasible);
    assert!(p.binding.unwrap().contains("detuning"));

    let mut zero = reference_refresh(3);
    zero.gate_time = 0.0;
    assert!(plan_refresh(&zero).is_err());
}

proptest! {
    #[test]
    fn every_single_bit_flip_is_detected(addr in 0u32..199, op in 0u8..4) {
        let fmt = FrameFormat::default();
        let opcode = [Opcode::Open, Opcode::Close, Opcode::SelectBank, Opcode::DebugReadback][op as usize];
        let frame = Frame { address: addr, opcode };
        let bits = fmt.encode(&frame).unwrap();
        prop_assert_eq!(fmt.decode(&bits).unwrap(), frame);
        for i in 0..bits.len() {
            let mut b = bits.clone();
            b[i] = !b[i];
            prop_assert!(fmt.decode(&b).is_err());
        }
    }

    #[test]
    fn wider_frames_round_trip(sync_bits in 2u32..6, address_bits in 8u32..12, addr in 0u32..199) {
        let fmt = FrameFormat { sync_bits, sync_pattern: 0b10, address_bits, ..FrameFormat::default() };
        fmt.validate().unwrap();
        let frame = Frame { address: addr, opcode: Opcode::Close };
        prop_assert_eq!(fmt.decode(&fmt.encode(&frame).unwrap()).unwrap(), frame);
    }

    #[test]
    fn refresh_is_monotone(n in 1usize..300, extra in 1usize..50, budget in 1e-6..1e-3f64, k in 1.0..10.0f64) {
        let mut a = reference_refresh(n);
        a.error_budget = budget;
        let mut b = a;
        b.electrodes = n + extra;
        prop_assert!(plan_refresh(&b).unwrap().refresh_hz <= plan_refresh(&a).unwrap().refresh_hz);
        let mut looser = a;
        looser.error_budget = budget * k;
        if plan_refresh(&a).unwrap().feasible {
            prop_assert!(plan_refresh(&looser).unwrap().feasible);
        }
    }

    #[test]
    fn swap_schedules_realise_targets(perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(), m in 1usize..=8) {
        let target: Vec<usize> = perm.into_iter().filter(|&v| v < m).collect();
        let arch = WiringArchitecture::multiplexed_preset().with_unit_cells(8);
        let v = reconfig_check(&arch, &target);
        prop_assert!(v.feasible);
        prop_assert!(v.swaps.len() <= m * (m - 1) / 2);
        prop_assert_eq!(simulate_swaps(m, &v.swaps), target.clone());
        let co = WiringArchitecture { kind: ArchitectureKind::CoWired { period: 9, hold: true }, ..arch };
        prop_assert!(reconfig_check(&co, &target).feasible);
    }

    #[test]
    fn replay_is_deterministic(ops in proptest::collection::vec((0usize..5, 0u8..3, 0.0..50.0f64), 0..40)) {
        let ids = ["1", "2", "3", "4", "5"];
        let cmds: Vec<Command> = ops.iter().map(|&(e, kind, ms)| match kind {
            0 => Command::Close { electrode: ids[e].into(), dac: e },
            1 => Command::Open { electrode: ids[e].into() },
            _ => Command::Wait { ms },
        }).collect();
        let mut base = trap1_matrix();
        for (i, v) in [-2.02, 2.2, 2.67, 0.5, -0.5].iter().enumerate() {
            base.set_dac(i, *v).unwrap();
        }
        let mut a = base.clone();
        let mut b = base;
        let ea = a.run(&cmds).unwrap();
        let eb = b.run(&cmds).unwrap();
        prop_assert_eq!(ea, eb);
        let va: Vec<u64> = a.nodes().iter().map(|n| n.v.to_bits()).collect();
        let vb: Vec<u64> = b.nodes().iter().map(|n| n.v.to_bits()).collect();
        prop_assert_eq!(va, vb);
        let opens = cmds.iter().filter(|c| matches!(c, Command::Open { .. })).count();
        prop_assert!(a.log().iter().filter(|e| e.kind == EventKind::Injection).count() <= opens);
    }
}
