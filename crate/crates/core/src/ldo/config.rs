//! `key = value unit` parameter files.
//!
//! One parameter per line, `#` starts a comment. Values take engineering
//! suffixes; the unit token is mandatory and must match the key.

use thiserror::Error;

use crate::netlist::{format_value, parse_value, Waveform};

use super::LdoParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown parameter `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` expects unit `{expected}`, got `{found}`")]
    Unit { line: usize, key: String, expected: &'static str, found: String },
    #[error("line {line}: `{key}` given twice")]
    Repeated { line: usize, key: String },
    #[error("missing parameters: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("{0}")]
    Invalid(String),
}

type Getter = fn(&LdoParams) -> f64;
type Setter = fn(&mut LdoParams, f64);

/// Every configurable parameter: key, unit, accessor pair.
const KEYS: &[(&str, &str, Getter, Setter)] = &[
    ("v_in", "V", |p| p.v_in, |p, v| p.v_in = v),
    ("v_enable", "V", |p| p.v_enable, |p, v| p.v_enable = v),
    ("logic_threshold", "V", |p| p.logic_threshold, |p, v| p.logic_threshold = v),
    ("v_out_nom", "V", |p| p.v_out_nom, |p, v| p.v_out_nom = v),
    ("v_ref", "V", |p| p.v_ref, |p, v| p.v_ref = v),
    ("v_ref_tc", "ppm/C", |p| p.v_ref_tc_ppm, |p, v| p.v_ref_tc_ppm = v),
    ("r1", "ohm", |p| p.r1, |p, v| p.r1 = v),
    ("r2", "ohm", |p| p.r2, |p, v| p.r2 = v),
    ("ea.a_dc", "V/V", |p| p.ea.a_dc, |p, v| p.ea.a_dc = v),
    ("ea.gbw", "Hz", |p| p.ea.gbw, |p, v| p.ea.gbw = v),
    ("ea.r_out", "ohm", |p| p.ea.r_out, |p, v| p.ea.r_out = v),
    ("ea.v_os", "V", |p| p.ea.v_os, |p, v| p.ea.v_os = v),
    ("ea.v_os_tc", "V/C", |p| p.ea.v_os_tc, |p, v| p.ea.v_os_tc = v),
    ("ea.swing_min", "V", |p| p.ea.swing_min, |p, v| p.ea.swing_min = v),
    ("ea.swing_max", "V", |p| p.ea.swing_max, |p, v| p.ea.swing_max = v),
    ("ea.v_bias", "V", |p| p.v_bias, |p, v| p.v_bias = v),
    ("pass.beta", "A/V2", |p| p.pass.beta, |p, v| p.pass.beta = v),
    ("pass.vt", "V", |p| p.pass.vt, |p, v| p.pass.vt = v),
    ("pass.lambda", "1/V", |p| p.pass.lambda, |p, v| p.pass.lambda = v),
    ("c_gate", "F", |p| p.c_gate, |p, v| p.c_gate = v),
    ("ilim.i_max", "A", |p| p.ilim.i_max, |p, v| p.ilim.i_max = v),
    ("ilim.i_sc", "A", |p| p.ilim.i_sc, |p, v| p.ilim.i_sc = v),
    ("ilim.v_nom", "V", |p| p.ilim.v_nom, |p, v| p.ilim.v_nom = v),
    ("ilim.g_on", "S", |p| p.ilim.g_on, |p, v| p.ilim.g_on = v),
    ("por.v_th", "V", |p| p.por.v_th, |p, v| p.por.v_th = v),
    ("por.hysteresis", "V", |p| p.por.hysteresis, |p, v| p.por.hysteresis = v),
    ("c_out", "F", |p| p.c_out, |p, v| p.c_out = v),
    ("esr", "ohm", |p| p.esr, |p, v| p.esr = v),
    ("iq.enabled", "A", |p| p.iq.enabled, |p, v| p.iq.enabled = v),
    ("iq.below_por", "A", |p| p.iq.below_por, |p, v| p.iq.below_por = v),
    ("iq.disabled", "A", |p| p.iq.disabled, |p, v| p.iq.disabled = v),
    ("switch.r_on", "ohm", |p| p.switch_r_on, |p, v| p.switch_r_on = v),
    ("r_discharge", "ohm", |p| p.r_discharge, |p, v| p.r_discharge = v),
    ("load", "A", |p| p.load.dc_value(), |p, v| p.load = Waveform::Dc(v)),
];

fn unit_matches(expected: &str, found: &str) -> bool {
    let norm = |u: &str| u.to_ascii_lowercase().replace('Ω', "ohm").replace("°", "");
    norm(expected) == norm(found)
}

fn assign(params: &mut LdoParams, text: &str) -> Result<Vec<&'static str>, ConfigError> {
    let mut seen: Vec<&'static str> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let syntax = |message: String| ConfigError::Syntax { line, message };
        let (key, rest) = body.split_once('=').ok_or_else(|| syntax("expected `key = value unit`".into()))?;
        let key = key.trim();
        let mut parts = rest.split_whitespace();
        let (value_text, unit) = match (parts.next(), parts.next(), parts.next()) {
            (Some(v), Some(u), None) => (v, u),
            (Some(_), None, _) => return Err(syntax(format!("`{key}` is missing its unit"))),
            _ => return Err(syntax("expected `key = value unit`".into())),
        };
        let &(name, expected, _, set) = KEYS
            .iter()
            .find(|(k, ..)| *k == key)
            .ok_or_else(|| ConfigError::UnknownKey { line, key: key.to_string() })?;
        if !unit_matches(expected, unit) {
            return Err(ConfigError::Unit { line, key: key.to_string(), expected, found: unit.to_string() });
        }
        let value = parse_value(value_text).ok_or_else(|| syntax(format!("`{value_text}` is not a number")))?;
        if seen.contains(&name) {
            return Err(ConfigError::Repeated { line, key: key.to_string() });
        }
        seen.push(name);
        set(params, value);
    }
    Ok(seen)
}

/// Apply the assignments in `text` on top of `params` (an override file).
/// Returns the keys that were set.
pub fn apply_config(params: &mut LdoParams, text: &str) -> Result<Vec<&'static str>, ConfigError> {
    let mut next = params.clone();
    let seen = assign(&mut next, text)?;
    next.validate().map_err(ConfigError::Invalid)?;
    *params = next;
    Ok(seen)
}

/// Parse a complete parameter file; every key must be present.
pub fn parse_config(text: &str) -> Result<LdoParams, ConfigError> {
    let mut p = LdoParams::placeholder();
    let seen = assign(&mut p, text)?;
    let missing: Vec<String> =
        KEYS.iter().filter(|(k, ..)| !seen.contains(k)).map(|(k, ..)| k.to_string()).collect();
    if !missing.is_empty() {
        return Err(ConfigError::Missing(missing));
    }
    p.validate().map_err(ConfigError::Invalid)?;
    Ok(p)
}

/// Canonical parameter file for `params`.
pub fn to_config(params: &LdoParams) -> String {
    let width = KEYS.iter().map(|(k, ..)| k.len()).max().unwrap_or(0);
    KEYS.iter()
        .map(|(k, unit, get, _)| format!("{k:<width$} = {} {unit}\n", format_value(get(params))))
        .collect()
}
