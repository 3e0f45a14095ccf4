mod support;

use ionmux::trap::{
    electrode_derivatives, electrode_potential, solve_axial_well, AxialPotential, Derivative,
    DerivativeOrder, ElectrodeGeometry, ElectrodeRole, Point, Rect, TrapError, WellOptions,
    GROUND_ID,
};
use ionmux::{IonSpecies, TrapLayout, VoltageSet};
use proptest::prelude::*;
use support::{quad_gradient, quad_potential, rel_err, vec_rel_err};

fn single(rect: [f64; 4]) -> ElectrodeGeometry {
    let r = Rect::new(rect[0], rect[1], rect[2], rect[3]).unwrap();
    ElectrodeGeometry::new("e", ElectrodeRole::DcInner, vec![r]).unwrap()
}

fn gradient(g: &ElectrodeGeometry, p: Point) -> [f64; 3] {
    match electrode_derivatives(g, p, DerivativeOrder::First).unwrap() {
        Derivative::Gradient(v) => [v.x, v.y, v.z],
        _ => unreachable!(),
    }
}

fn hessian(g: &ElectrodeGeometry, p: Point) -> [[f64; 3]; 3] {
    match electrode_derivatives(g, p, DerivativeOrder::Second).unwrap() {
        Derivative::Hessian(h) => [
            [h[(0, 0)], h[(0, 1)], h[(0, 2)]],
            [h[(1, 0)], h[(1, 1)], h[(1, 2)]],
            [h[(2, 0)], h[(2, 1)], h[(2, 2)]],
        ],
        _ => unreachable!(),
    }
}

fn end_state() -> VoltageSet {
    VoltageSet::from_pairs([("1", -2.02), ("2", 0.68), ("3", 2.15)]).unwrap()
}

#[test]
fn square_electrode_matches_quadrature() {
    let rect = [-100.0, 100.0, -100.0, 100.0];
    let phi = electrode_potential(&single(rect), Point::new(0.0, 0.0, 100.0)).unwrap();
    let q = quad_potential(rect, 0.0, 0.0, 100.0);
    assert!(rel_err(phi, q) <= 1e-6, "{phi} vs {q}");
    assert!((phi - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn basis_limits() {
    let g = single([-500.0, 500.0, -500.0, 500.0]);
    assert!(electrode_potential(&g, Point::new(10.0, -20.0, 1e-4)).unwrap() > 1.0 - 1e-6);
    assert!(electrode_potential(&g, Point::new(0.0, 0.0, 1e9)).unwrap() < 1e-9);
    assert!(matches!(
        electrode_potential(&g, Point::new(0.0, 0.0, 0.0)),
        Err(TrapError::Domain(_))
    ));
    assert!(electrode_derivatives(&g, Point::new(0.0, 0.0, -1.0), DerivativeOrder::First).is_err());
}

#[test]
fn gradient_vanishes_above_square_centre() {
    let g = single([-80.0, 80.0, -80.0, 80.0]);
    let d = gradient(&g, Point::new(0.0, 0.0, 55.0));
    assert!(d[0].abs() < 1e-15 && d[1].abs() < 1e-15);
}

#[test]
fn derivatives_match_finite_differences() {
    let g = ElectrodeGeometry::new(
        "zig",
        ElectrodeRole::DcInner,
        vec![
            Rect::new(-120.0, 30.0, -40.0, 25.0).unwrap(),
            Rect::new(30.0, 90.0, 10.0, 140.0).unwrap(),
        ],
    )
    .unwrap();
    let h = 1e-3;
    let pts = [
        (0.0, 0.0, 60.0),
        (37.0, -12.0, 110.0),
        (-150.0, 80.0, 45.0),
        (200.0, 200.0, 170.0),
        (10.0, 60.0, 20.0),
        (-30.0, -90.0, 75.0),
        (55.5, 33.3, 90.0),
        (-400.0, 10.0, 300.0),
        (80.0, 5.0, 35.0),
        (0.0, 150.0, 130.0),
    ];
    for (x, y, z) in pts {
        let phi = |dx: f64, dy: f64, dz: f64| {
            electrode_potential(&g, Point::new(x + dx, y + dy, z + dz)).unwrap()
        };
        let fd = [
            (phi(h, 0.0, 0.0) - phi(-h, 0.0, 0.0)) / (2.0 * h),
            (phi(0.0, h, 0.0) - phi(0.0, -h, 0.0)) / (2.0 * h),
            (phi(0.0, 0.0, h) - phi(0.0, 0.0, -h)) / (2.0 * h),
        ];
        let an = gradient(&g, Point::new(x, y, z));
        assert!(vec_rel_err(fd, an) <= 1e-5, "gradient at {x},{y},{z}");

        let hs = hessian(&g, Point::new(x, y, z));
        for (axis, step) in [(h, 0.0, 0.0), (0.0, h, 0.0), (0.0, 0.0, h)].iter().enumerate() {
            let gp = gradient(&g, Point::new(x + step.0, y + step.1, z + step.2));
            let gm = gradient(&g, Point::new(x - step.0, y - step.1, z - step.2));
            let col = [0, 1, 2].map(|i| (gp[i] - gm[i]) / (2.0 * h));
            let an_col = [hs[0][axis], hs[1][axis], hs[2][axis]];
            assert!(vec_rel_err(col, an_col) <= 1e-5, "hessian column {axis} at {x},{y},{z}");
        }
        assert!((hs[0][0] + hs[1][1] + hs[2][2]).abs() <= 1e-9);
    }
}

#[test]
fn partition_of_unity_on_a_tiled_plane() {
    let big = 1e10;
    let cuts_x = [-big, -300.0, 120.0, big];
    let cuts_y = [-big, -50.0, 75.0, big];
    let mut tiles = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            tiles.push(single([cuts_x[i], cuts_x[i + 1], cuts_y[j], cuts_y[j + 1]]));
        }
    }
    for p in [Point::new(0.0, 0.0, 50.0), Point::new(-280.0, 60.0, 400.0), Point::new(1e3, -2e3, 10.0)] {
        let s: f64 = tiles.iter().map(|t| electrode_potential(t, p).unwrap()).sum();
        assert!((s - 1.0).abs() <= 1e-6, "sum {s}");
    }
}

#[test]
fn presets_load_with_expected_geometry() {
    let t1 = TrapLayout::preset("trap1").unwrap();
    assert_eq!(t1.ion_height(), 170.0);
    let rf = t1.electrode("rf").unwrap();
    let widths: Vec<f64> = rf.rects().iter().map(|r| r.height()).collect();
    assert_eq!(widths, vec![257.0, 257.0]);
    assert_eq!(rf.rects()[0].y1 - rf.rects()[1].y2, 177.0);
    // RF null of an infinite gapless rail pair lies at the geometric mean of the rail edges
    assert!((t1.axis().z - (88.5f64 * 345.5).sqrt()).abs() < 1.5);
    assert!(t1.axis().y.abs() < 1e-9);

    let t2 = TrapLayout::preset("trap2").unwrap();
    assert_eq!(t2.ion_height(), 80.0);
    assert_eq!(t2.ids_with_role(ElectrodeRole::DcDynamic).len(), 96);
    assert_eq!(t2.ids_with_role(ElectrodeRole::Shim).len(), 98);
    let rf = t2.electrode("rf").unwrap();
    // half of the 5 um gap is absorbed on each side of a rail
    assert_eq!(rf.rects()[0].height() - 5.0, 110.0);
    assert_eq!(rf.rects()[0].y1 - rf.rects()[1].y2 + 5.0, 90.0);
    assert!((t2.axis().z - 80.0).abs() < 5.0);
    assert!(TrapLayout::preset("trap3").is_err());
}

#[test]
fn layout_json_round_trip_and_validation() {
    let t1 = TrapLayout::preset("trap1").unwrap();
    let again = TrapLayout::from_json_str(&t1.to_json()).unwrap();
    assert_eq!(again.electrodes(), t1.electrodes());
    let bad = r#"{"name":"x","ion_height_um":-1,"rf_amplitude_v":0,
        "electrodes":[{"id":"a","role":"shim","rects":[[0,1,0,1]]}]}"#;
    assert!(TrapLayout::from_json_str(bad).is_err());
    let dup = r#"{"name":"x","ion_height_um":50,"rf_amplitude_v":0,
        "electrodes":[{"id":"a","role":"shim","rects":[[0,1,0,1]]},
                      {"id":"a","role":"shim","rects":[[2,3,0,1]]}]}"#;
    assert!(TrapLayout::from_json_str(dup).is_err());
    let gnd = r#"{"name":"x","ion_height_um":50,"rf_amplitude_v":0,
        "electrodes":[{"id":"gnd","role":"shim","rects":[[0,1,0,1]]}]}"#;
    assert!(TrapLayout::from_json_str(gnd).is_err());
}

#[test]
fn pseudopotential_null_scaling_and_fd() {
    let ion = IonSpecies::calcium40();
    let t1 = TrapLayout::preset("trap1").unwrap();
    let null = t1.axis().at(0.0);
    assert!(t1.pseudopotential(null, &ion).unwrap() < 1e-15);

    let p = Point::new(20.0, 15.0, 160.0);
    let u1 = t1.pseudopotential(p, &ion).unwrap();
    assert!(u1 > 0.0);
    let doubled = t1.clone().with_rf_amplitude(2.0 * t1.rf_amplitude());
    let u2 = doubled.pseudopotential(p, &ion).unwrap();
    assert!(rel_err(u2, 4.0 * u1) < 1e-12);

    // |grad phi_rf|^2 by finite differences of the RF basis potential
    let rf = t1.electrode("rf").unwrap();
    let h = 1e-3;
    let phi = |dx: f64, dy: f64, dz: f64| {
        electrode_potential(rf, Point::new(p.x + dx, p.y + dy, p.z + dz)).unwrap()
    };
    let g2 = [(h, 0.0, 0.0), (0.0, h, 0.0), (0.0, 0.0, h)]
        .iter()
        .map(|&(a, b, c)| ((phi(a, b, c) - phi(-a, -b, -c)) / (2.0 * h)).powi(2))
        .sum::<f64>();
    let q = ion.charge_c;
    let omega = t1.rf_omega();
    let expect = q * q * t1.rf_amplitude().powi(2) * g2 * 1e12
        / (4.0 * ion.mass_kg * omega * omega)
        / ionmux::constants::ELEMENTARY_CHARGE;
    assert!(rel_err(u1, expect) <= 1e-4);

    let off = t1.clone().with_rf_omega(0.0);
    assert!(matches!(off.pseudopotential(p, &ion), Err(TrapError::Config(_))));
}

#[test]
fn stray_field_response_checks() {
    let t1 = TrapLayout::preset("trap1").unwrap();
    let p = t1.axis().at(0.0);
    assert_eq!(t1.stray_field_response(GROUND_ID, p).unwrap().norm(), 0.0);
    assert!(matches!(
        t1.stray_field_response("nope", p),
        Err(TrapError::UnknownElectrode(_))
    ));

    let shim = t1.electrode("7").unwrap();
    let r = shim.rects()[0];
    let resp = t1.stray_field_response("7", p).unwrap();
    let g = quad_gradient([r.x1, r.x2, r.y1, r.y2], p.x, p.y, p.z);
    let expect = [-g[0] * 1e6, -g[1] * 1e6, -g[2] * 1e6];
    assert!(vec_rel_err([resp.x, resp.y, resp.z], expect) <= 1e-5);

    let pair = t1.common_mode_response(["6", "8"], p).unwrap();
    assert!(pair.x.abs() < 1e-9 * pair.norm());
}

#[test]
fn zero_voltages_give_no_well() {
    let t1 = TrapLayout::preset("trap1").unwrap();
    let r = t1.axial_well(&VoltageSet::new(), IonSpecies::default(), (-130.0, 130.0));
    assert!(matches!(r, Err(TrapError::NoWell { .. })));
}

#[test]
fn unknown_voltage_id_is_rejected() {
    let t1 = TrapLayout::preset("trap1").unwrap();
    let v = VoltageSet::from_pairs([("42", 1.0)]).unwrap();
    assert!(matches!(
        t1.axial_well(&v, IonSpecies::default(), (-130.0, 130.0)),
        Err(TrapError::UnknownElectrode(_))
    ));
}

#[test]
fn end_state_frequency_is_near_half_megahertz() {
    let t1 = TrapLayout::preset("trap1").unwrap();
    let w = t1.axial_well(&end_state(), IonSpecies::default(), (-130.0, 130.0)).unwrap();
    let f = w.freq_mhz();
    assert!((0.25..=0.75).contains(&f), "f = {f} MHz");
    assert!(w.depth > 0.0);
}

#[test]
fn well_is_gauge_invariant() {
    let t1 = TrapLayout::preset("trap1").unwrap();
    let ion = IonSpecies::default();
    let base = end_state();
    let w0 = t1.axial_well(&base, ion, (-130.0, 130.0)).unwrap();
    let mut shifted = VoltageSet::new();
    let c = 1.37;
    for e in t1.electrodes() {
        shifted.set(e.id(), base.get(e.id()) + c).unwrap();
    }
    shifted.set(GROUND_ID, c).unwrap();
    let w1 = t1.axial_well(&shifted, ion, (-130.0, 130.0)).unwrap();
    assert!((w0.z0 - w1.z0).abs() <= 1e-9);
    assert!(rel_err(w1.omega_ax, w0.omega_ax) <= 1e-9);
    assert!((w1.depth - w0.depth).abs() <= 1e-9 * w0.depth.max(1.0));
}

#[test]
fn frequency_matches_numerical_curvature() {
    let t1 = TrapLayout::preset("trap1").unwrap();
    let ion = IonSpecies::default();
    let v = end_state();
    let w = t1.axial_well(&v, ion, (-130.0, 130.0)).unwrap();
    let prof = t1.axial_profile(&v, ion).unwrap();
    let h = 1.0;
    let f = |s: f64| prof.eval(s).unwrap().0;
    let d2 = (f(w.z0 + h) - 2.0 * f(w.z0) + f(w.z0 - h)) / (h * h);
    let omega = (ion.charge_c / ion.mass_kg * d2 * 1e12).sqrt();
    assert!(rel_err(w.omega_ax, omega) <= 1e-4);
    assert!(prof.eval(w.z0).unwrap().1.abs() < 1e-10);
}

#[test]
fn synthetic_quadratic_profile() {
    struct Quad(f64);
    impl AxialPotential for Quad {
        fn eval(&self, s: f64) -> Result<(f64, f64, f64), TrapError> {
            Ok((0.5 * self.0 * s * s, self.0 * s, self.0))
        }
    }
    let ion = IonSpecies::calcium40();
    let kappa = 1.6e-5;
    let w = solve_axial_well(&Quad(kappa), &ion, (-70.0, 90.0), &WellOptions::default()).unwrap();
    assert_eq!(w.omega_ax, (ion.charge_c * kappa * 1e12 / ion.mass_kg).sqrt());
    assert!(w.z0.abs() < 1e-9);
}

fn arb_rect() -> impl Strategy<Value = [f64; 4]> {
    (-300.0..300.0f64, 5.0..400.0f64, -300.0..300.0f64, 5.0..400.0f64)
        .prop_map(|(x, w, y, h)| [x, x + w, y, y + h])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_bounded_and_harmonic(
        r in arb_rect(), x in -500.0..500.0f64, y in -500.0..500.0f64, z in 1.0..600.0f64
    ) {
        let g = single(r);
        let p = Point::new(x, y, z);
        let phi = electrode_potential(&g, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&phi));
        let h = hessian(&g, p);
        prop_assert!((h[0][0] + h[1][1] + h[2][2]).abs() <= 1e-9);
        for (i, row) in h.iter().enumerate() {
            for (j, hij) in row.iter().enumerate() {
                prop_assert!((hij - h[j][i]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn superposition(
        a in -5.0..5.0f64, b in -5.0..5.0f64,
        v1 in proptest::collection::vec(-2.0..2.0f64, 5),
        v2 in proptest::collection::vec(-2.0..2.0f64, 5),
        x in -150.0..150.0f64,
    ) {
        let t1 = TrapLayout::preset("trap1").unwrap();
        let ids = ["1", "2", "3", "4", "5"];
        let set = |v: &[f64]| VoltageSet::from_pairs(ids.iter().copied().zip(v.iter().copied())).unwrap();
        let comb: Vec<f64> = v1.iter().zip(&v2).map(|(p, q)| a * p + b * q).collect();
        let big = comb.iter().any(|c| c.abs() > 10.0);
        prop_assume!(!big);
        let p = Point::new(x, 0.0, 150.0);
        let lhs = t1.potential(&set(&comb), p).unwrap();
        let rhs = a * t1.potential(&set(&v1), p).unwrap() + b * t1.potential(&set(&v2), p).unwrap();
        let scale = lhs.abs().max(rhs.abs()).max(1e-3);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }
}
