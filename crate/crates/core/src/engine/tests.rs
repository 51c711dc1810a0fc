use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::devices::ElementKind;
use crate::netlist::{parse_netlist, Element, Waveform};

fn net(text: &str) -> Circuit {
    parse_netlist(text).unwrap()
}

#[test]
fn divider_is_one_iteration() {
    let c = net("V1 in 0 DC 10\nR1 in mid 1k\nR2 mid 0 1k\n");
    let op = dc_operating_point(&c).unwrap();
    assert!((op.voltage("mid").unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(op.stats.iterations, 1);
    assert_eq!(op.stats.strategy, super::Strategy::Newton);
    assert!((op.supply_current - 5e-3).abs() < 1e-15);
    assert!((op.value("i(R1)").unwrap() - 5e-3).abs() < 1e-15);
    assert_eq!(op.branch_currents(), vec![("V1".to_string(), op.supply_current)]);
}

fn diode_nmos() -> Circuit {
    net("I1 0 d DC 100u\nM1 d d 0 NMOS beta=200u vt=0.5 lambda=0\n")
}

#[test]
fn diode_connected_nmos() {
    let op = dc_operating_point(&diode_nmos()).unwrap();
    let expected = 0.5 + (2.0 * 100e-6 / 200e-6f64).sqrt();
    assert!((op.voltage("d").unwrap() - expected).abs() < 1e-6);
    let m = op.element("M1").unwrap();
    assert_eq!(m.region, Some(crate::devices::Region::Saturation));
    assert!((m.current - 100e-6).abs() < 1e-11);
}

#[test]
fn newton_is_superlinear() {
    let op = dc_operating_point(&diode_nmos()).unwrap();
    let e = &op.stats.update_norms;
    assert!(e.len() >= 3, "{e:?}");
    let (a, b) = (e[e.len() - 2], e[e.len() - 1]);
    assert!(b <= a.powf(1.5), "updates {e:?}");
}

#[test]
fn kcl_holds_at_solution() {
    let op = dc_operating_point(&diode_nmos()).unwrap();
    assert!(op.stats.kcl_ratio <= 1.0);
}

#[test]
fn singular_reports_node() {
    let c = net("V1 in 0 DC 1\nR1 in 0 1k\nC1 in x 1u\nC2 x 0 1u\n");
    match dc_operating_point(&c) {
        Err(EngineError::Singular(n)) => assert_eq!(n, "x"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_circuit_is_rejected() {
    let mut c = Circuit::new();
    c.add(Element::new("R1", &["a", "b"], ElementKind::resistor(1.0).unwrap())).unwrap();
    assert!(matches!(dc_operating_point(&c), Err(EngineError::Invalid(_))));
}

#[test]
fn source_sweep_across_resistor() {
    let c = net("V1 in 0 DC 0\nR1 in 0 2k\n");
    let t = dc_sweep(&c, &SweepSpec::linear(SweepTarget::Source("V1".into()), 0.0, 10.0, 11)).unwrap();
    assert!(t.all_converged());
    for (v, i) in t.values().iter().zip(t.probe("i(V1)")) {
        assert!((i.unwrap() - v / 2e3).abs() < 1e-12);
    }
    let csv = t.table(&["v(in)", "i(V1)"]).to_csv();
    assert!(csv.starts_with("v1 (V),v(in) (V),i(V1) (A)\n"), "{csv}");
}

#[test]
fn reversed_sweep_matches_forward() {
    let c = net("V1 in 0 DC 0\nR1 in d 10k\nM1 d d 0 NMOS beta=200u vt=0.5 lambda=0.02\n");
    let fwd = dc_sweep(&c, &SweepSpec::linear(SweepTarget::Source("V1".into()), 0.0, 5.0, 26)).unwrap();
    let rev = dc_sweep(&c, &SweepSpec::linear(SweepTarget::Source("V1".into()), 5.0, 0.0, 26)).unwrap();
    let a = fwd.probe("d");
    let mut b = rev.probe("d");
    b.reverse();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.unwrap() - y.unwrap()).abs() < 1e-6, "{x:?} {y:?}");
    }
}

#[test]
fn temperature_and_parameter_sweeps() {
    let c = net("V1 in 0 DC 1 tc=0.01\nR1 in out 1k\nR2 out 0 1k\n");
    let t = dc_sweep(&c, &SweepSpec::linear(SweepTarget::Temperature, 27.0, 127.0, 3)).unwrap();
    let v: Vec<f64> = t.probe("out").into_iter().map(Option::unwrap).collect();
    assert!((v[2] - 1.0).abs() < 1e-9);
    let p = dc_sweep(&c, &SweepSpec::log(SweepTarget::Parameter("R2".into()), 1e3, 1e5, 3)).unwrap();
    let v = p.probe("out")[2].unwrap();
    assert!((v - 1e5 / 1.01e5).abs() < 1e-9);
}

fn rc_lowpass() -> Circuit {
    net("V1 in 0 DC 0\nR1 in out 1k\nC1 out 0 1u\n")
}

#[test]
fn rc_lowpass_corner() {
    let c = rc_lowpass();
    let op = dc_operating_point(&c).unwrap();
    let fc = 1.0 / (2.0 * PI * 1e3 * 1e-6);
    let r = ac_analysis(&c, &op, &[fc], "V1", &["out"]).unwrap();
    let oracle = Complex64::new(1.0, 0.0) / Complex64::new(1.0, 2.0 * PI * fc * 1e-3);
    let mag = r.magnitude_db("out").unwrap()[0];
    assert!((mag - 20.0 * oracle.norm().log10()).abs() < 1e-6);
    assert!((mag + 3.0103).abs() < 1e-3);
    assert!((r.phase_deg("out").unwrap()[0] + 45.0).abs() < 1e-6);
    assert!((r.psrr_db("out").unwrap()[0] - 3.0103).abs() < 1e-3);
}

#[test]
fn ac_matches_dc_slope() {
    let c = net("V1 in 0 DC 1\nR1 in a 1k\nR2 a 0 3k\nC1 a 0 1u\nR3 a b 2k\nR4 b 0 2k\nC2 b 0 100n\n");
    let op = dc_operating_point(&c).unwrap();
    let tau_max = 1e3 * 1.1e-6 * 10.0;
    let f_min = 1.0 / (2.0 * PI * tau_max) * 1e-3;
    let h = ac_analysis(&c, &op, &[f_min, f_min * 2.0], "V1", &["b"]).unwrap();
    let s = dc_sweep(&c, &SweepSpec::linear(SweepTarget::Source("V1".into()), 1.0, 1.1, 2)).unwrap();
    let vb = s.probe("b");
    let slope = (vb[1].unwrap() - vb[0].unwrap()) / 0.1;
    let mag = h.series("b").unwrap()[0].norm();
    assert!(((mag - slope) / slope).abs() < 0.01);
}

#[test]
fn ac_current_source_excitation() {
    let c = net("I1 0 a DC 0\nR1 a 0 2k\n");
    let op = dc_operating_point(&c).unwrap();
    let r = ac_analysis(&c, &op, &[1.0], "I1", &["a", "i(R1)"]).unwrap();
    assert!((r.series("a").unwrap()[0].re - 2e3).abs() < 1e-9);
    assert!((r.series("i(R1)").unwrap()[0].re - 1.0).abs() < 1e-12);
    assert!(matches!(ac_analysis(&c, &op, &[1.0], "R1", &["a"]), Err(EngineError::UnknownSource(_))));
    assert!(matches!(ac_analysis(&c, &op, &[1.0], "I1", &["nope"]), Err(EngineError::UnknownProbe(_))));
}

fn rc_step() -> Circuit {
    let mut c = net("V1 in 0 DC 0\nR1 in out 1k\nC1 out 0 1u\n");
    c.set_waveform("V1", Waveform::step(0.0, 1.0, 1e-4, 0.0).unwrap()).unwrap();
    c
}

fn rc_error(trace: &TransientTrace) -> f64 {
    let v = trace.signal("out").unwrap();
    trace
        .time
        .iter()
        .zip(&v)
        .map(|(t, v)| {
            let exact = if *t <= 1e-4 { 0.0 } else { 1.0 - (-(t - 1e-4) / 1e-3).exp() };
            (v - exact).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn rc_charging_at_one_time_constant() {
    let c = rc_step();
    let tr = transient(&c, 3e-3, &StepPolicy::default()).unwrap();
    let v = tr.signal("out").unwrap();
    let target = 1e-4 + 1e-3;
    let k = tr.time.iter().position(|t| *t >= target).unwrap();
    let (t0, t1) = (tr.time[k - 1], tr.time[k]);
    let at = v[k - 1] + (v[k] - v[k - 1]) * (target - t0) / (t1 - t0);
    let exact = 1.0 - (-1f64).exp();
    assert!(((at - exact) / exact).abs() < 1e-3, "{at} vs {exact}");
    assert!(tr.stats.steps > 0 && tr.stats.newton_iterations >= tr.stats.steps);
    assert!(tr.stats.max_kcl_ratio <= 1.0);
    assert!(tr.time.contains(&1e-4));
}

#[test]
fn trapezoidal_is_second_order() {
    let c = rc_step();
    let coarse = transient(&c, 2e-3, &StepPolicy::Fixed(2e-5)).unwrap();
    let fine = transient(&c, 2e-3, &StepPolicy::Fixed(1e-5)).unwrap();
    let ratio = rc_error(&coarse) / rc_error(&fine);
    assert!(ratio >= 3.5, "error ratio {ratio}");
}

#[test]
fn constant_sources_stay_at_equilibrium() {
    let c = net("V1 in 0 DC 3\nR1 in out 1k\nC1 out 0 1u esr=0.1\nR2 out 0 2k\nI1 out 0 DC 1m\n");
    let op = dc_operating_point(&c).unwrap();
    let tr = transient(&c, 1e-2, &StepPolicy::default()).unwrap();
    for node in ["in", "out"] {
        let v0 = op.voltage(node).unwrap();
        assert!(tr.signal(node).unwrap().iter().all(|v| (v - v0).abs() < 1e-9));
    }
    assert_eq!(tr.signal("out").unwrap()[0], op.voltage("out").unwrap());
}

#[test]
fn rc_energy_never_grows() {
    let mut c = net("I1 0 a DC 1m\nR1 a 0 1k\nC1 a 0 1u\nR2 a b 2k\nC2 b 0 500n\nR3 b 0 10k\n");
    c.set_waveform("I1", Waveform::step(1e-3, 0.0, 1e-3, 0.0).unwrap()).unwrap();
    let tr = transient(&c, 2e-2, &StepPolicy::default()).unwrap();
    let (a, b) = (tr.signal("a").unwrap(), tr.signal("b").unwrap());
    let energy: Vec<f64> = a.iter().zip(&b).map(|(a, b)| 0.5 * 1e-6 * a * a + 0.5 * 500e-9 * b * b).collect();
    let start = tr.time.iter().position(|t| *t >= 1e-3).unwrap();
    for w in energy[start..].windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} > {}", w[1], w[0]);
    }
    assert!(energy[energy.len() - 1] < 1e-3 * energy[start]);
}

#[test]
fn transient_rejects_bad_stop() {
    assert!(matches!(transient(&rc_step(), 0.0, &StepPolicy::default()), Err(EngineError::Parameter(_))));
}

fn single_pole_loop() -> Circuit {
    net("VREF ref 0 DC 0.1\nEAMP E1 out ref out 0 a_dc=1000 gbw=1meg r_out=1 swing_min=-100 swing_max=100\nRL out 0 1meg\n.break E1 inp\n")
}

#[test]
fn single_pole_margin() {
    let lg = loop_gain(&single_pole_loop(), &log_grid(1.0, 1e8, 20)).unwrap();
    assert!((lg.phase_margin_deg - 90.0).abs() <= 0.5, "{}", lg.phase_margin_deg);
    let k: f64 = 1e6 / (1e6 + 1.0);
    assert!((lg.dc_gain_db - 20.0 * (1000.0 * k).log10()).abs() < 1e-6);
    assert!((lg.unity_gain_hz - 1e3 * ((1000.0 * k).powi(2) - 1.0).sqrt()).abs() < 1.0);
}

#[test]
fn two_pole_margin() {
    let c_val = 1.0 / (2.0 * PI * 1e3 * 1e7);
    let text = format!(
        "VREF ref 0 DC 0.1\nEAMP E1 n2 ref out 0 a_dc=10k gbw=10meg r_out=1 swing_min=-100 swing_max=100\nR2 out n2 999\nC2 n2 0 {c_val:e}\n.break E1 inp\n"
    );
    let lg = loop_gain(&net(&text), &log_grid(1.0, 1e9, 20)).unwrap();
    let (p1, p2) = (1e3, 1e7);
    let t = |f: f64| {
        1e4 / (Complex64::new(1.0, f / p1) * Complex64::new(1.0, f / p2))
    };
    let (mut lo, mut hi) = (1e3f64, 1e9f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if t(mid).norm() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pm = 180.0 - (lo / p1).atan().to_degrees() - (lo / p2).atan().to_degrees();
    assert!((lg.phase_margin_deg - pm).abs() < 1.0, "{} vs {pm}", lg.phase_margin_deg);
    assert!((lg.dc_gain_db - 80.0).abs() < 0.01);
}

#[test]
fn loop_gain_errors() {
    let mut c = single_pole_loop();
    assert!(matches!(loop_gain(&c, &log_grid(1.0, 10.0, 3)), Err(EngineError::Grid(_))));
    assert!(matches!(loop_gain(&c, &log_grid(1.0, 100.0, 20)), Err(EngineError::NoCrossing { .. })));
    c.loop_break = None;
    assert!(matches!(loop_gain(&c, &log_grid(1.0, 1e8, 20)), Err(EngineError::NoBreakPoint)));
}

fn random_network(seed: u64, nodes: usize, extra: usize, nonlinear: bool) -> Circuit {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut c = Circuit::new();
    let name = |i: usize| if i == 0 { "0".to_string() } else { format!("n{i}") };
    let mut k = 0;
    let mut add = |c: &mut Circuit, a: String, b: String, kind: ElementKind| {
        k += 1;
        let na = a.clone();
        let nb = b.clone();
        c.add(Element::new(format!("X{k}"), &[na.as_str(), nb.as_str()], kind)).unwrap();
    };
    add(&mut c, name(1), name(0), ElementKind::VoltageSource { waveform: Waveform::Dc(rng.gen_range(0.5..5.0)), tc: 0.0 });
    add(&mut c, name(1), name(0), ElementKind::resistor(1e4).unwrap());
    for i in 2..=nodes {
        let j = rng.gen_range(0..i);
        add(&mut c, name(i), name(j), ElementKind::resistor(10f64.powf(rng.gen_range(1.0..6.0))).unwrap());
        add(&mut c, name(i), name(0), ElementKind::resistor(10f64.powf(rng.gen_range(2.0..6.0))).unwrap());
    }
    for _ in 0..extra {
        let (a, b) = (rng.gen_range(1..=nodes), rng.gen_range(0..=nodes));
        if a != b {
            add(&mut c, name(a), name(b), ElementKind::resistor(10f64.powf(rng.gen_range(1.0..6.0))).unwrap());
        }
    }
    if nonlinear {
        let d = name(rng.gen_range(2..=nodes));
        c.add(Element::new(
            "M1",
            &[d.as_str(), d.as_str(), "0"],
            ElementKind::Mosfet(crate::devices::MosfetParams::new(crate::devices::Polarity::N, 1e-3, 0.5, 0.05).unwrap()),
        ))
        .unwrap();
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_networks_take_one_iteration(seed in any::<u64>(), nodes in 2usize..12, extra in 0usize..8) {
        let c = random_network(seed, nodes, extra, false);
        let op = dc_operating_point(&c).unwrap();
        prop_assert_eq!(op.stats.iterations, 1);
        prop_assert!(op.stats.kcl_ratio <= 1.0);
    }

    #[test]
    fn kcl_bound_holds_on_nonlinear_networks(seed in any::<u64>(), nodes in 2usize..10, extra in 0usize..6) {
        let c = random_network(seed, nodes, extra, true);
        let op = dc_operating_point(&c).unwrap();
        prop_assert!(op.stats.kcl_ratio <= 1.0, "ratio {}", op.stats.kcl_ratio);
    }
}
