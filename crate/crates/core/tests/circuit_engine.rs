use capnet::circuit::{
    assemble, kcl_residual, transient_solve, CircuitError, DiodeModel, Integrator, Netlist,
    Simulator, TransientConfig, Waveform,
};
use proptest::prelude::*;

fn rc_netlist(r: f64, c: f64, v: f64) -> Netlist {
    let mut n = Netlist::new();
    n.source("V1", "in", "0", Waveform::Step { before: 0.0, after: v, at: 0.0 })
        .resistor("R1", "in", "cap", r)
        .capacitor("C1", "cap", "0", c, 0.0)
        .probe("I", "R1");
    n
}

fn cfg(dt: f64, t_end: f64, integrator: Integrator) -> TransientConfig {
    TransientConfig {
        dt,
        t_end,
        integrator,
        ..Default::default()
    }
}

#[test]
fn rc_step_matches_analytic_charge_curve() {
    let (r, c) = (330.0, 10e-6);
    let tau = r * c;
    for integrator in [Integrator::Trapezoidal, Integrator::BackwardEuler] {
        let trace = transient_solve(&rc_netlist(r, c, 5.0), &cfg(1e-6, tau, integrator)).unwrap();
        let vc = *trace.node("cap").unwrap().last().unwrap();
        let expected = 5.0 * (1.0 - (-1.0f64).exp());
        assert!((expected - 3.161).abs() < 1e-3);
        assert!(((vc - expected) / expected).abs() < 5e-3, "{integrator:?}: {vc}");
        assert!((trace.times.last().unwrap() - tau).abs() < 1e-12);
    }
}

#[test]
fn rc_kcl_residual_below_tolerance() {
    let trace = transient_solve(&rc_netlist(330.0, 10e-6, 5.0), &cfg(1e-6, 3.3e-3, Integrator::Trapezoidal))
        .unwrap();
    let res = kcl_residual(&trace, &rc_netlist(330.0, 10e-6, 5.0)).unwrap();
    assert!(res < 1e-9, "residual {res}");
}

#[test]
fn kcl_residual_flags_inconsistent_trace() {
    let net = rc_netlist(330.0, 10e-6, 5.0);
    let mut trace = transient_solve(&net, &cfg(1e-5, 1e-4, Integrator::Trapezoidal)).unwrap();
    // constant voltages with zero capacitor current: R1 carries current nobody absorbs
    for s in trace.node_voltages.iter_mut() {
        s.iter_mut().for_each(|v| *v = 1.0);
    }
    trace.node_voltages[1].iter_mut().for_each(|v| *v = 0.0);
    for s in trace.element_currents.iter_mut() {
        s.iter_mut().for_each(|v| *v = 0.0);
    }
    let res = kcl_residual(&trace, &net).unwrap();
    assert!(res > 1e-3, "residual {res}");

    let mut short = trace.clone();
    short.node_names.pop();
    short.node_voltages.pop();
    assert!(matches!(kcl_residual(&short, &net), Err(CircuitError::ShapeMismatch(_))));
}

#[test]
fn zero_source_gives_zero_trace() {
    let trace = transient_solve(&rc_netlist(330.0, 10e-6, 0.0), &cfg(1e-5, 1e-3, Integrator::Trapezoidal)).unwrap();
    assert!(trace.node_voltages.iter().flatten().all(|v| *v == 0.0));
    assert!(trace.element_currents.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn repeated_solves_are_bit_identical() {
    let mut net = rc_netlist(330.0, 10e-6, 5.0);
    net.diode("D1", "in", "x", DiodeModel::n4148())
        .resistor("R2", "x", "0", 1e3);
    let c = cfg(1e-6, 2e-4, Integrator::Trapezoidal);
    let a = transient_solve(&net, &c).unwrap();
    let b = transient_solve(&net, &c).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a, b);
}

#[test]
fn trace_csv_header_and_precision() {
    let trace = transient_solve(&rc_netlist(330.0, 10e-6, 5.0), &cfg(1e-5, 3e-5, Integrator::Trapezoidal)).unwrap();
    let csv = trace.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,in,cap,I");
    assert_eq!(csv.lines().count(), 5);
    // values round-trip exactly
    let row: Vec<f64> = csv.lines().nth(2).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[2], trace.node("cap").unwrap()[1]);
    assert_eq!(row[3], trace.probe("I").unwrap()[1]);
}

#[test]
fn shockley_rectifier_forward_drop() {
    let mut n = Netlist::new();
    n.source("V", "a", "0", Waveform::Dc(5.0))
        .diode("D", "a", "k", DiodeModel::n4148())
        .resistor("R", "k", "0", 1e3)
        .capacitor("C", "k", "0", 1e-9, 0.0)
        .probe("I", "R");
    let trace = transient_solve(&n, &cfg(1e-6, 1e-4, Integrator::Trapezoidal)).unwrap();
    let i = *trace.probe("I").unwrap().last().unwrap();
    let drop = 5.0 - i * 1e3;
    assert!(drop > 0.5 && drop < 0.8, "forward drop {drop}");
    assert!(kcl_residual(&trace, &n).unwrap() < 1e-9);
}

#[test]
fn ideal_diode_blocks_reverse_and_conducts_forward() {
    let mut n = Netlist::new();
    n.source("V", "a", "0", Waveform::Pwl(vec![(0.0, 5.0), (1e-3, 5.0), (1.001e-3, -5.0)]))
        .diode("D", "a", "k", DiodeModel::ideal())
        .resistor("R", "k", "0", 1e3)
        .probe("I", "R");
    let trace = transient_solve(&n, &cfg(1e-6, 2e-3, Integrator::Trapezoidal)).unwrap();
    let i = trace.probe("I").unwrap();
    assert!((i[500] - 5e-3).abs() < 1e-12);
    // blocked: only the shunt leaks
    assert!(i[1999].abs() < 1e-11);
    assert!(kcl_residual(&trace, &n).unwrap() < 1e-9);
}

#[test]
fn starved_newton_reports_divergence() {
    let mut n = Netlist::new();
    n.source("V", "a", "0", Waveform::Step { before: 0.0, after: 50.0, at: 0.0 })
        .diode("D", "a", "k", DiodeModel::n4148())
        .resistor("R", "k", "0", 1.0);
    let c = TransientConfig {
        newton_max_iter: 1,
        ..cfg(1e-6, 1e-5, Integrator::Trapezoidal)
    };
    let err = transient_solve(&n, &c).unwrap_err();
    assert!(matches!(err, CircuitError::NewtonDivergence { .. }), "{err:?}");
}

#[test]
fn invalid_config_rejected() {
    let net = rc_netlist(1.0, 1.0, 1.0);
    for c in [
        TransientConfig { dt: 0.0, ..Default::default() },
        TransientConfig { dt: 1.0, t_end: 0.5, ..Default::default() },
        TransientConfig { newton_tol: 0.0, ..Default::default() },
        TransientConfig { newton_max_iter: 0, ..Default::default() },
    ] {
        assert!(matches!(transient_solve(&net, &c), Err(CircuitError::InvalidConfig(_))));
    }
}

#[test]
fn passive_network_energy_never_increases() {
    let mut n = Netlist::new();
    n.capacitor("C1", "a", "0", 10e-6, 3.0)
        .capacitor("C2", "b", "0", 1e-6, -1.0)
        .resistor("R1", "a", "b", 330.0)
        .resistor("R2", "b", "0", 1e3)
        .diode("D", "0", "a", DiodeModel::ideal());
    for integrator in [Integrator::Trapezoidal, Integrator::BackwardEuler] {
        let trace = transient_solve(&n, &cfg(1e-6, 5e-3, integrator)).unwrap();
        let a = trace.node("a").unwrap();
        let b = trace.node("b").unwrap();
        let energy: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(va, vb)| 0.5 * 10e-6 * va * va + 0.5 * 1e-6 * vb * vb)
            .collect();
        for w in energy.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-18, "{integrator:?}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn simulator_continues_from_overwritten_state() {
    let net = rc_netlist(330.0, 10e-6, 5.0);
    let sys = assemble(&net).unwrap();
    let mut sim = Simulator::new(&sys, &cfg(1e-6, 1e-3, Integrator::Trapezoidal)).unwrap();
    sim.set_capacitor_voltages(&[5.0]).unwrap();
    sim.set_source("V1", Waveform::Dc(5.0)).unwrap();
    for _ in 0..100 {
        sim.step().unwrap();
    }
    assert!((sim.capacitor_voltages()[0] - 5.0).abs() < 1e-12);
    assert!(sim.set_capacitor_voltages(&[1.0, 2.0]).is_err());
    assert!(sim.set_source("nope", Waveform::Dc(0.0)).is_err());
}

fn ladder(r: [f64; 3], c: [f64; 2], stim: Waveform) -> Netlist {
    let mut n = Netlist::new();
    n.source("V", "in", "0", stim)
        .resistor("R1", "in", "a", r[0])
        .capacitor("C1", "a", "0", c[0], 0.0)
        .resistor("R2", "a", "b", r[1])
        .capacitor("C2", "b", "0", c[1], 0.0)
        .resistor("R3", "b", "0", r[2])
        .probe("out", "R3");
    n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn diode_free_networks_superpose(
        r in proptest::array::uniform3(10.0f64..5e3),
        c in proptest::array::uniform2(1e-7f64..1e-5),
        v1 in proptest::collection::vec(-5.0f64..5.0, 4),
        v2 in proptest::collection::vec(-5.0f64..5.0, 4),
        (ka, kb) in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let grid: Vec<f64> = (0..4).map(|k| k as f64 * 1e-4).collect();
        let w1 = Waveform::Pwl(grid.iter().copied().zip(v1).collect());
        let w2 = Waveform::Pwl(grid.iter().copied().zip(v2).collect());
        let fine: Vec<f64> = (0..=400).map(|k| k as f64 * 1e-6).collect();
        let combo = Waveform::combine(ka, &w1, kb, &w2, &fine);
        let tc = cfg(1e-6, 4e-4, Integrator::Trapezoidal);
        let y1 = transient_solve(&ladder(r, c, w1), &tc).unwrap();
        let y2 = transient_solve(&ladder(r, c, w2), &tc).unwrap();
        let y = transient_solve(&ladder(r, c, combo), &tc).unwrap();
        let (p1, p2, p) = (y1.probe("out").unwrap(), y2.probe("out").unwrap(), y.probe("out").unwrap());
        let scale = p.iter().chain(p1).chain(p2).fold(1e-12f64, |m, v| m.max(v.abs()));
        for k in 0..p.len() {
            let lin = ka * p1[k] + kb * p2[k];
            prop_assert!((p[k] - lin).abs() <= 1e-6 * scale, "k={} {} vs {}", k, p[k], lin);
        }
    }
}
