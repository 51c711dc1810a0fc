use super::*;
use crate::devices::limiter_current;
use crate::engine::{dc_operating_point, log_grid, loop_gain};
use crate::netlist::{parse_netlist, validate};

fn with_load(p: &LdoParams, load: f64) -> LdoParams {
    LdoParams { load: Waveform::Dc(load), ..p.clone() }
}

fn vout(c: &Circuit) -> f64 {
    dc_operating_point(c).unwrap().value("vout").unwrap()
}

fn with_resistor(mut c: Circuit, r: f64) -> Circuit {
    c.add(Element::new("RLOAD", &["vout", "0"], ElementKind::resistor(r).unwrap())).unwrap();
    c
}

#[test]
fn default_values() {
    let p = default_params();
    assert!((p.ilim.i_max - 0.1).abs() <= 0.01 * 0.1);
    assert_eq!(p.c_out, 2.2e-6);
    assert_eq!(p.esr, 0.1);
    assert_eq!(p.v_ref, 0.75);
    assert_eq!((p.r1, p.r2), (2.2e6, 1e6));
    assert_eq!(p.por.v_th, 2.35);
    assert_eq!(p.iq.enabled, 1.5e-6);
    assert_eq!(p.pass.polarity, Polarity::P);
}

#[test]
fn config_round_trip() {
    let p = default_params();
    let text = to_config(&p);
    assert_eq!(parse_config(&text).unwrap(), p);
}

#[test]
fn config_errors() {
    let text = to_config(&default_params());
    let missing: String = text.lines().filter(|l| !l.starts_with("esr")).map(|l| format!("{l}\n")).collect();
    assert_eq!(parse_config(&missing), Err(ConfigError::Missing(vec!["esr".into()])));

    let mut p = default_params();
    assert!(matches!(apply_config(&mut p, "c_out = 1u"), Err(ConfigError::Syntax { line: 1, .. })));
    assert!(matches!(apply_config(&mut p, "c_out = 1u ohm"), Err(ConfigError::Unit { .. })));
    assert!(matches!(apply_config(&mut p, "# note\nbogus = 1 V"), Err(ConfigError::UnknownKey { line: 2, .. })));
    assert!(matches!(apply_config(&mut p, "esr = 1 ohm\nesr = 2 ohm"), Err(ConfigError::Repeated { line: 2, .. })));
    assert!(matches!(apply_config(&mut p, "r1 = 1MEG ohm"), Err(ConfigError::Invalid(_))));
    assert_eq!(p, default_params(), "failed overrides leave the parameters untouched");
}

#[test]
fn override_file() {
    let mut p = default_params();
    let set = apply_config(&mut p, "c_out = 4.7u F   # bigger\nea.gbw = 10MEG Hz\n").unwrap();
    assert_eq!(set, vec!["c_out", "ea.gbw"]);
    assert_eq!(p.c_out, 4.7e-6);
    assert_eq!(p.ea.gbw, 1e7);
}

#[test]
fn invariants_rejected() {
    let p = default_params();
    let bad = [
        LdoParams { r2: 1.1e6, ..p.clone() },
        LdoParams { ilim: LimiterParams { i_sc: 0.2, ..p.ilim }, ..p.clone() },
        LdoParams { por: PorParams { v_th: 2.6, hysteresis: 0.0 }, ..p.clone() },
        LdoParams { iq: IqModel { enabled: 0.5e-6, ..p.iq }, ..p.clone() },
        LdoParams { c_out: 0.0, ..p.clone() },
    ];
    for b in bad {
        assert!(matches!(build_ldo(&b), Err(LdoError::Params(_))), "{b:?}");
    }
}

#[test]
fn builds_valid_circuit() {
    let c = build_ldo(&default_params()).unwrap();
    assert!(validate(&c).is_ok());
    assert_eq!(c.loop_break, Some(LoopBreak { element: "EA".into(), terminal: 1 }));
    for probe in ["vin", "vout", "iload", "isupply"] {
        assert!(c.resolve_probe(probe).is_some(), "{probe}");
    }
    let op = dc_operating_point(&c).unwrap();
    assert!((op.value("vout").unwrap() - 2.4).abs() < 5e-3);
}

#[test]
fn netlist_text_parses_back() {
    let p = default_params();
    let text = netlist_text(&p).unwrap();
    assert_eq!(parse_netlist(&text).unwrap(), build_ldo(&p).unwrap());
}

#[test]
fn regulation_identity() {
    let p = default_params();
    let bound = p.v_out_set() / p.ea.a_dc + p.ea.v_os.abs() * p.gain();
    for v_in in [2.6, 4.0, 5.5] {
        for load in [0.0, 1e-3, 0.05, 0.1] {
            let q = LdoParams { v_in, ..with_load(&p, load) };
            let err = (vout(&build_ldo(&q).unwrap()) - p.v_out_set()).abs();
            assert!(err <= bound, "v_in {v_in} load {load}: {err} > {bound}");
        }
    }
}

#[test]
fn limiter_engages_above_limit() {
    let p = default_params();
    let c = with_resistor(build_ldo(&p).unwrap(), 20.0);
    let op = dc_operating_point(&c).unwrap();
    let v = op.value("vout").unwrap();
    let i = v / 20.0;
    let lim = limiter_current(&p.ilim, v);
    assert!((i - lim).abs() <= 1e-4 * lim, "{i} vs {lim}");
    assert!(p.v_out_nom - v > 10.0 * 20e-3);
}

#[test]
fn short_circuit_current() {
    let p = default_params();
    let c = with_resistor(build_ldo(&p).unwrap(), 1e-3);
    let op = dc_operating_point(&c).unwrap();
    let i = op.value("vout").unwrap() / 1e-3;
    assert!((i - p.ilim.i_sc).abs() <= 0.01 * p.ilim.i_sc, "{i}");
}

#[test]
fn limiter_transparent_below_ninety_percent() {
    let p = default_params();
    for load in [0.0, 0.02, 0.05, 0.9 * p.ilim.i_max] {
        let q = with_load(&p, load);
        let with = vout(&build_ldo(&q).unwrap());
        let without = vout(&build_variant(&q, Variant::WithoutLimiter).unwrap());
        assert!((with - without).abs() < 1e-4, "load {load}");
    }
}

#[test]
fn below_por_follows_supply() {
    let p = LdoParams { v_in: 2.0, ..default_params() };
    let op = dc_operating_point(&build_ldo(&p).unwrap()).unwrap();
    assert!((op.value("vout").unwrap() - 2.0).abs() < 1e-3);
    assert!(op.value("isupply").unwrap() < 1e-6);
    assert!((op.value("isupply").unwrap() - p.iq.below_por).abs() < 1e-3 * p.iq.below_por);
}

#[test]
fn disabled_discharges_output() {
    let p = default_params();
    let mut c = build_ldo(&p).unwrap();
    c.set_waveform(ENABLE, Waveform::Dc(0.0)).unwrap();
    let op = dc_operating_point(&c).unwrap();
    assert!(op.value("vout").unwrap().abs() < 1e-6);
    assert!((op.value("isupply").unwrap() - p.iq.disabled).abs() < 1e-3 * p.iq.disabled);
}

#[test]
fn enabled_quiescent_current() {
    let p = LdoParams { v_in: 5.5, ..default_params() };
    let op = dc_operating_point(&build_ldo(&p).unwrap()).unwrap();
    let iq = op.value("isupply").unwrap();
    assert!((iq - 1.5e-6).abs() < 0.05 * 1.5e-6, "{iq}");
}

#[test]
fn loop_dc_gain() {
    let p = with_load(&default_params(), 100e-6);
    let lg = loop_gain(&build_ldo(&p).unwrap(), &log_grid(1.0, 1e8, 10)).unwrap();
    assert!((lg.dc_gain_db - 89.0).abs() <= 1.0, "{}", lg.dc_gain_db);
}

#[test]
fn pinned_feedback_has_no_loop() {
    let c = build_variant(&default_params(), Variant::PinnedFeedback { v_fb: 0.75 }).unwrap();
    assert!(c.loop_break.is_none());
    assert_eq!(c.element(ERROR_AMP).unwrap().nodes[1], "fbpin");
}
