use proptest::prelude::*;

use super::*;
use crate::devices::ElementKind;
use crate::engine::{EngineError, Simulator};
use crate::ldo::{build_ldo, build_variant, default_params, LdoParams, Variant, ERROR_AMP, LIMITER, PASS};
use crate::netlist::{parse_netlist, Circuit};

fn sim() -> Simulator {
    Simulator::default()
}

fn ldo(p: &LdoParams) -> Circuit {
    build_ldo(p).unwrap()
}

fn default_ldo() -> Circuit {
    ldo(&default_params())
}

#[test]
fn dropout_at_minimum_input() {
    let d = measure_dropout(&sim(), &default_ldo(), &DropoutConfig::default()).unwrap();
    assert!((d.at_v_in_min - (2.6 - 2.4)).abs() <= 0.01, "{}", d.at_v_in_min);
    assert!((d.v_out_edge - 0.98 * d.nominal).abs() < 1e-5);
}

#[test]
fn dropout_follows_on_resistance() {
    let base = default_params();
    let p = LdoParams { pass: crate::devices::MosfetParams { beta: base.pass.beta * 100.0, ..base.pass }, ..base };
    let c = ldo(&p);
    let d = measure_dropout(&sim(), &c, &DropoutConfig::default()).unwrap();
    assert!(d.dropout < 20e-3, "{}", d.dropout);

    // on-resistance of the pass device linearized at the edge, plus the
    // limiter drop from inverting its knee law
    let mut work = c.clone();
    work.set_waveform(crate::ldo::LOAD, crate::netlist::Waveform::Dc(0.1)).unwrap();
    let start = sim().dc_operating_point(&work).unwrap();
    work.set_waveform(crate::ldo::SUPPLY, crate::netlist::Waveform::Dc(d.v_in_edge)).unwrap();
    let op = sim().dc_operating_point_from(&work, &start).unwrap();
    let v_sg = op.voltage("vin").unwrap() - op.voltage("gate").unwrap();
    let i = op.current(PASS).unwrap().abs();
    let r_on = 1.0 / (p.pass.beta * (v_sg - p.pass.vt));
    let lim = crate::devices::limiter_current(&p.ilim, op.voltage("vout").unwrap());
    let phi: f64 = i / lim;
    let v_lim = phi / (1.0 - phi.powi(8)).powf(0.125) * lim / p.ilim.g_on;
    let expect = i * r_on + v_lim;
    assert!((d.dropout - expect).abs() <= 0.1 * expect, "{} vs {expect}", d.dropout);
}

#[test]
fn dropout_grows_with_load() {
    let c = default_ldo();
    let at = |load| measure_dropout(&sim(), &c, &DropoutConfig { load, ..Default::default() }).unwrap().dropout;
    let d: Vec<f64> = [0.0, 0.05, 0.1].into_iter().map(at).collect();
    assert!(d[0] <= d[1] && d[1] <= d[2], "{d:?}");
}

#[test]
fn dropout_without_regulation_edge() {
    let cfg = DropoutConfig { v_start: 5.5, v_stop: 5.0, points: 6, ..Default::default() };
    assert!(matches!(
        measure_dropout(&sim(), &default_ldo(), &cfg),
        Err(CharError::NoRegulationEdge { .. })
    ));
}

#[test]
fn line_regulation_default() {
    let l = measure_line_regulation(&sim(), &default_ldo(), &LineConfig::default()).unwrap();
    assert!(l.delta_v <= 5e-3, "{}", l.delta_v);
    assert_eq!(l.trace.rows.len(), 30);
}

#[test]
fn line_regulation_scales_with_gain() {
    let p = default_params();
    let hi = LdoParams { ea: crate::devices::ErrorAmpParams { a_dc: p.ea.a_dc * 10.0, ..p.ea }, ..p.clone() };
    let base = measure_line_regulation(&sim(), &ldo(&p), &LineConfig::default()).unwrap();
    let gain = measure_line_regulation(&sim(), &ldo(&hi), &LineConfig::default()).unwrap();
    assert!(base.delta_v >= 5.0 * gain.delta_v, "{} vs {}", base.delta_v, gain.delta_v);
}

#[test]
fn line_regulation_rejects_empty_range() {
    let cfg = LineConfig { v_start: 3.0, v_stop: 3.0, ..Default::default() };
    assert!(matches!(
        measure_line_regulation(&sim(), &default_ldo(), &cfg),
        Err(CharError::Engine(EngineError::Sweep(_)))
    ));
}

#[test]
fn load_regulation_default() {
    let l = measure_load_regulation(&sim(), &default_ldo(), &LoadConfig::default()).unwrap();
    assert!(l.delta_v <= 20e-3, "{}", l.delta_v);
    let linear = l.r_ldo * 0.1;
    assert!((linear - l.delta_v).abs() <= 0.2 * l.delta_v, "{linear} vs {}", l.delta_v);
}

#[test]
fn open_loop_output_resistance() {
    let p = default_params();
    let around = LoadConfig { i_start: 9e-3, i_stop: 11e-3, points: 5, ..Default::default() };
    let closed = measure_load_regulation(&sim(), &ldo(&p), &around).unwrap();
    let mut at = ldo(&LdoParams { load: crate::netlist::Waveform::Dc(10e-3), ..p.clone() });
    at.set_waveform(crate::ldo::SUPPLY, crate::netlist::Waveform::Dc(around.v_in)).unwrap();
    let v_fb = sim().dc_operating_point(&at).unwrap().voltage("fb").unwrap();
    let open_c = build_variant(&p, Variant::PinnedFeedback { v_fb }).unwrap();
    let open = measure_load_regulation(&sim(), &open_c, &around).unwrap();
    let gain = measure_dc_gain(&sim(), &at, &DcGainConfig { load: 10e-3, ..Default::default() }).unwrap();
    let t = 10f64.powf(gain.dc_gain_db / 20.0);
    assert!(open.r_ldo >= t / 2.0 * closed.r_ldo, "{} vs {} (T = {t})", open.r_ldo, closed.r_ldo);
}

#[test]
fn temperature_flat_without_drift() {
    let t = measure_temp_dependence(&sim(), &default_ldo(), &TempConfig::default()).unwrap();
    assert!(t.delta_v < 0.1e-3, "{}", t.delta_v);
}

#[test]
fn temperature_offset_drift() {
    let p = default_params();
    let drift = 10e-6;
    let q = LdoParams { ea: crate::devices::ErrorAmpParams { v_os_tc: drift, ..p.ea }, ..p.clone() };
    let t = measure_temp_dependence(&sim(), &ldo(&q), &TempConfig::default()).unwrap();
    let expect = drift * 165.0 * (1.0 + p.r1 / p.r2);
    assert!((t.delta_v - expect).abs() <= 0.05 * expect, "{} vs {expect}", t.delta_v);
}

#[test]
fn temperature_reference_drift() {
    let p = default_params();
    let q = LdoParams { v_ref_tc_ppm: 15.0, ..p.clone() };
    let t = measure_temp_dependence(&sim(), &ldo(&q), &TempConfig::default()).unwrap();
    let expect = p.v_ref * 15e-6 * 165.0 * (1.0 + p.r1 / p.r2);
    assert!((t.delta_v - expect).abs() <= 0.05 * expect, "{} vs {expect}", t.delta_v);
}

#[test]
fn transient_default_step() {
    let t = measure_transient_dv(&sim(), &default_ldo(), &TransientConfig::default()).unwrap();
    assert!(t.max_dv <= 20e-3, "{}", t.max_dv);
    assert!(t.first.peak < 0.0 && t.second.peak > 0.0);
    assert_eq!(t.undershoot, -t.first.peak);
    assert_eq!(t.overshoot, t.second.peak);
    assert!(t.first.recovery > 0.0 && t.first.recovery < 100e-6);
}

#[test]
fn transient_zero_step() {
    let cfg = TransientConfig { i2: 1e-3, ..Default::default() };
    let t = measure_transient_dv(&sim(), &default_ldo(), &cfg).unwrap();
    assert!(t.max_dv < 10e-6, "{}", t.max_dv);
}

#[test]
fn transient_esr_edge_term() {
    let p = default_params();
    let cfg = TransientConfig { edge: 10e-9, ..Default::default() };
    let with = measure_transient_dv(&sim(), &ldo(&p), &cfg).unwrap();
    let without = measure_transient_dv(&sim(), &ldo(&LdoParams { esr: 0.0, ..p.clone() }), &cfg).unwrap();
    let step = p.esr * (cfg.i2 - cfg.i1);
    for (w, wo, sign) in [(with.first, without.first, -1.0), (with.second, without.second, 1.0)] {
        let diff = w.at_edge_end - wo.at_edge_end;
        assert!((diff - sign * step).abs() <= 0.05 * step, "{diff} vs {step}");
        assert!(w.peak.abs() >= step * 0.95);
    }
}

#[test]
fn quiescent_modes() {
    let p = default_params();
    let q = measure_quiescent(&sim(), &default_ldo(), &QuiescentConfig::default()).unwrap();
    assert!((q.enabled - 1.5e-6).abs() <= 0.05 * 1.5e-6, "{}", q.enabled);
    assert!(q.below_por < 1e-6);
    assert!((q.vout_below_por - 2.0).abs() < 1e-3);
    // leakage of gmin across each nonlinear element is the only other path
    let c = default_ldo();
    let paths = c.elements().iter().filter(|e| e.kind.is_nonlinear()).count() as f64;
    let leak = sim().options.gmin * 5.5 * paths;
    assert!((q.disabled - p.iq.disabled).abs() <= leak, "{}", q.disabled);
    assert!(q.vout_disabled.abs() < 1e-6);
}

#[test]
fn psrr_default() {
    let p = measure_psrr(&sim(), &default_ldo(), &PsrrConfig::default()).unwrap();
    assert!(p.at(10.0).unwrap() >= 65.0);
    assert_eq!(p.spot.len(), 5);
    assert_eq!(p.freqs.len(), p.psrr_db.len());
}

fn psrr_vs_line(p: &LdoParams) -> (f64, f64) {
    let c = ldo(p);
    let cfg = PsrrConfig { spot: vec![1e-3], ..Default::default() };
    let ac = measure_psrr(&sim(), &c, &cfg).unwrap().at(1e-3).unwrap();
    let line = LineConfig { v_start: 2.6, v_stop: 2.61, points: 3, load: cfg.load };
    let slope = measure_line_regulation(&sim(), &c, &line).unwrap().slope;
    (ac, 20.0 * (1.0 / slope.abs()).log10())
}

#[test]
fn psrr_matches_line_slope() {
    let (ac, dc) = psrr_vs_line(&default_params());
    assert!((ac - dc).abs() <= 1.0, "{ac} vs {dc}");
}

#[test]
fn psrr_high_frequency_divider() {
    let p = default_params();
    let cfg = PsrrConfig { spot: vec![1e7], ..Default::default() };
    let m = measure_psrr(&sim(), &default_ldo(), &cfg).unwrap();
    let mut c = default_ldo();
    c.set_waveform(crate::ldo::LOAD, crate::netlist::Waveform::Dc(cfg.load)).unwrap();
    let op = sim().dc_operating_point(&c).unwrap();
    let r_ds = 1.0 / op.element(PASS).unwrap().gds.unwrap();
    let w = 2.0 * std::f64::consts::PI * 1e7;
    let z = num_complex::Complex64::new(p.esr, -1.0 / (w * p.c_out));
    let h = (z / (z + r_ds + 1.0 / p.ilim.g_on)).norm();
    let expect = -20.0 * h.log10();
    assert!((m.at(1e7).unwrap() - expect).abs() <= 3.0, "{} vs {expect}", m.at(1e7).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn psrr_line_consistency(a_scale in 0.5f64..4.0, beta in 2.0f64..50.0, lambda in 0.05f64..0.5) {
        let p = default_params();
        let q = LdoParams {
            ea: crate::devices::ErrorAmpParams { a_dc: p.ea.a_dc * a_scale, ..p.ea },
            pass: crate::devices::MosfetParams { beta, lambda, ..p.pass },
            ..p
        };
        let (ac, dc) = psrr_vs_line(&q);
        prop_assert!((ac - dc).abs() <= 1.0, "{} vs {}", ac, dc);
    }
}

#[test]
fn dc_gain_default() {
    let g = measure_dc_gain(&sim(), &default_ldo(), &DcGainConfig::default()).unwrap();
    assert!((g.dc_gain_db - 89.0).abs() <= 1.0, "{}", g.dc_gain_db);
}

#[test]
fn phase_margin_curve() {
    let m = measure_phase_margin_vs_load(&sim(), &default_ldo(), &MarginCurveConfig::default()).unwrap();
    assert_eq!(m.loads.len(), 20);
    assert!(m.margins.iter().all(|pm| *pm > 45.0), "{:?}", m.margins);
    assert!(m.max_step < 15.0);
    assert!((m.loads[0] - 100e-6).abs() < 1e-12 && (m.loads[19] - 0.1).abs() < 1e-12);
}

#[test]
fn phase_margin_single_pole() {
    let c = parse_netlist(
        "VIN vin 0 DC 2.6\nRIN vin 0 1k\nVREF ref 0 DC 1\n\
         EAMP EA vout ref vout 0 a_dc=1000 gbw=1meg r_out=1 swing_min=-100 swing_max=100\n\
         RL vout 0 1meg\nILOAD vout 0 DC 0\n.break EA inp\n",
    )
    .unwrap();
    let m = measure_phase_margin_vs_load(&sim(), &c, &MarginCurveConfig::default()).unwrap();
    for pm in &m.margins {
        assert!((pm - 90.0).abs() <= 0.5, "{pm}");
    }
}

#[test]
fn current_limit_default() {
    let p = default_params();
    let l = measure_current_limit(&sim(), &default_ldo(), &CurrentLimitConfig::default()).unwrap();
    assert!((l.i_at_nominal - 0.1).abs() <= 0.01 * 0.1, "{}", l.i_at_nominal);
    assert!((l.i_short - p.ilim.i_sc).abs() <= 0.01 * p.ilim.i_sc, "{}", l.i_short);
    assert!(l.engaged_points > 10);
    assert!(l.max_law_error <= sim().options.reltol, "{}", l.max_law_error);
    assert!(l.monotone);
}

#[test]
fn current_limit_needs_limiter() {
    let c = build_variant(&default_params(), Variant::WithoutLimiter).unwrap();
    assert_eq!(
        measure_current_limit(&sim(), &c, &CurrentLimitConfig::default()).unwrap_err(),
        CharError::MissingElement(LIMITER.into())
    );
}

#[test]
fn compliance_default_passes() {
    let r = run_compliance(&sim(), &default_ldo(), &default_targets());
    assert_eq!(r.results.len(), default_targets().len());
    for res in &r.results {
        assert_eq!(res.verdict, Verdict::Pass, "{} {:?}", res.id(), res.diagnostic);
        assert!(res.trace.is_some());
    }
    assert!(r.all_pass());
    let ids: Vec<SpecId> = r.results.iter().map(|x| x.id()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn compliance_reduced_gain_fails_dc_gain() {
    let p = default_params();
    let q = LdoParams { ea: crate::devices::ErrorAmpParams { a_dc: p.ea.a_dc / 10.0, ..p.ea }, ..p };
    let r = run_compliance(&sim(), &ldo(&q), &default_targets());
    for res in &r.results {
        let m = res.measured.unwrap_or_else(|| panic!("{} not run: {:?}", res.id(), res.diagnostic));
        let expect = if res.target.comparator.holds(m, res.target.value) { Verdict::Pass } else { Verdict::Fail };
        assert_eq!(res.verdict, expect);
    }
    let dc = r.results.iter().find(|x| x.id() == SpecId::DcGain).unwrap();
    assert_eq!(dc.verdict, Verdict::Fail);
}

#[test]
fn compliance_empty_and_not_run() {
    let r = run_compliance(&sim(), &default_ldo(), &[]);
    assert!(r.results.is_empty() && r.all_pass());
    assert_eq!(r.to_csv().lines().count(), 1);

    let mut c = default_ldo();
    c.remove(ERROR_AMP).unwrap();
    c.loop_break = None;
    let t = parse_targets("dc_gain =±1 89 dB\niq <= 2 uA").unwrap();
    let r = run_compliance(&sim(), &c, &t);
    assert_eq!(r.results.len(), 2);
    let dc = &r.results[1];
    assert_eq!(dc.id(), SpecId::DcGain);
    assert_eq!(dc.verdict, Verdict::NotRun);
    assert!(dc.diagnostic.is_some() && dc.measured.is_none());
}

#[test]
fn compliance_is_deterministic() {
    let c = default_ldo();
    let a = run_compliance(&sim(), &c, &default_targets());
    let b = run_compliance(&sim(), &c, &default_targets());
    assert_eq!(a.to_csv(), b.to_csv());
    for (x, y) in a.results.iter().zip(&b.results) {
        assert_eq!(x.trace, y.trace);
    }
    assert_eq!(a.circuit, crate::netlist::serialize(&c));
    assert!(a.to_table().contains("phase_margin"));
}

#[test]
fn limiter_kind_is_checked() {
    let mut c = default_ldo();
    c.element_mut(LIMITER).unwrap().kind = ElementKind::resistor(1.0).unwrap();
    assert!(matches!(
        measure_current_limit(&sim(), &c, &CurrentLimitConfig::default()),
        Err(CharError::Precondition(_))
    ));
}
