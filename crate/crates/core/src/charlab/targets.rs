//! Spec targets: `spec_id comparator value unit [key=value ...]`.
//!
//! Comparators are `<=`, `>=`, `=±tol` and `=±tol%` (`≤`, `≥` and `=+-`
//! are accepted too). Units are an SI prefix on `V` or `A`, or one of
//! `dB`, `deg`, `ppm/C`. Condition values take engineering suffixes and
//! `lo..hi` ranges.

use std::fmt;

use thiserror::Error;

use crate::netlist::parse_value;

pub const DEFAULT_TARGETS: &str = include_str!("../../data/default.targets");

/// The default target set.
pub fn default_targets() -> Vec<SpecTarget> {
    parse_targets(DEFAULT_TARGETS).expect("bundled targets parse")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpecId {
    Dropout,
    LineReg,
    LoadReg,
    TempDep,
    TransientDv,
    Iq,
    Psrr,
    DcGain,
    Ilimit,
    PhaseMargin,
}

impl SpecId {
    pub const ALL: [SpecId; 10] = [
        SpecId::Dropout,
        SpecId::LineReg,
        SpecId::LoadReg,
        SpecId::TempDep,
        SpecId::TransientDv,
        SpecId::Iq,
        SpecId::Psrr,
        SpecId::DcGain,
        SpecId::Ilimit,
        SpecId::PhaseMargin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpecId::Dropout => "dropout",
            SpecId::LineReg => "line_reg",
            SpecId::LoadReg => "load_reg",
            SpecId::TempDep => "temp_dep",
            SpecId::TransientDv => "transient_dv",
            SpecId::Iq => "iq",
            SpecId::Psrr => "psrr",
            SpecId::DcGain => "dc_gain",
            SpecId::Ilimit => "ilimit",
            SpecId::PhaseMargin => "phase_margin",
        }
    }

    pub fn parse(text: &str) -> Option<SpecId> {
        SpecId::ALL.into_iter().find(|id| id.as_str() == text)
    }

    /// Base units a target for this id may use.
    pub fn units(self) -> &'static [&'static str] {
        match self {
            SpecId::Dropout | SpecId::LineReg | SpecId::LoadReg | SpecId::TransientDv => &["V"],
            SpecId::TempDep => &["V", "ppm/C"],
            SpecId::Iq | SpecId::Ilimit => &["A"],
            SpecId::Psrr | SpecId::DcGain => &["dB"],
            SpecId::PhaseMargin => &["deg"],
        }
    }

    /// Condition keys that apply, and whether each takes a range.
    fn conditions(self) -> &'static [(&'static str, bool)] {
        match self {
            SpecId::Dropout => &[("vin", true), ("load", false)],
            SpecId::LineReg => &[("vin", true), ("load", false)],
            SpecId::LoadReg => &[("vin", false), ("load", true)],
            SpecId::TempDep => &[("temp", true), ("vin", false), ("load", false)],
            SpecId::TransientDv => &[("load", true), ("at", false)],
            SpecId::Iq => &[("vin", false)],
            SpecId::Psrr => &[("vin", false), ("load", false), ("freq", false)],
            SpecId::DcGain => &[("vin", false), ("load", false)],
            SpecId::Ilimit => &[("vin", false)],
            SpecId::PhaseMargin => &[("vin", false), ("load", true), ("points", false)],
        }
    }
}

impl fmt::Display for SpecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparator {
    AtMost,
    AtLeast,
    /// `|measured - value| <= tol`, with `tol` in base units.
    Within { tol: f64 },
    /// `|measured - value| <= percent / 100 * |value|`.
    WithinPercent { percent: f64 },
}

impl Comparator {
    /// Verdict of `measured` against `value`, with no slack.
    pub fn holds(&self, measured: f64, value: f64) -> bool {
        match *self {
            Comparator::AtMost => measured <= value,
            Comparator::AtLeast => measured >= value,
            Comparator::Within { tol } => (measured - value).abs() <= tol,
            Comparator::WithinPercent { percent } => (measured - value).abs() <= percent / 100.0 * value.abs(),
        }
    }
}

/// A closed range; a single value has `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Conditions {
    pub vin: Option<Range>,
    pub load: Option<Range>,
    pub temp: Option<Range>,
    pub freq: Option<f64>,
    /// Load edge time for transients.
    pub at: Option<f64>,
    pub points: Option<usize>,
    /// The conditions as written.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecTarget {
    pub id: SpecId,
    pub comparator: Comparator,
    /// Target in base units.
    pub value: f64,
    /// Unit as written, e.g. `mV`.
    pub unit: String,
    /// Base units per written unit.
    pub scale: f64,
    pub conditions: Conditions,
}

impl SpecTarget {
    /// Base unit, e.g. `V` for `mV`.
    pub fn base_unit(&self) -> &'static str {
        split_unit(&self.unit).map(|(_, b)| b).unwrap_or("")
    }

    /// Comparator and value in the written unit, e.g. `<= 5 mV`.
    pub fn describe(&self) -> String {
        let v = self.value / self.scale;
        let u = &self.unit;
        match self.comparator {
            Comparator::AtMost => format!("<= {v} {u}"),
            Comparator::AtLeast => format!(">= {v} {u}"),
            Comparator::Within { tol } => format!("= {v} ± {} {u}", tol / self.scale),
            Comparator::WithinPercent { percent } => format!("= {v} {u} ± {percent}%"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct TargetError {
    pub line: usize,
    pub message: String,
}

const BASE_UNITS: [&str; 5] = ["ppm/C", "deg", "dB", "V", "A"];

/// Split a unit into `(prefix, base)`.
fn split_unit(unit: &str) -> Option<(String, &'static str)> {
    let norm = unit.replace('°', "");
    let base = BASE_UNITS.into_iter().find(|b| norm.ends_with(b))?;
    let prefix = &norm[..norm.len() - base.len()];
    let prefixed = matches!(base, "V" | "A") && scaled("1", prefix).is_some();
    (prefix.is_empty() || prefixed).then(|| (prefix.to_string(), base))
}

fn scaled(number: &str, prefix: &str) -> Option<f64> {
    parse_value(&format!("{number}{prefix}"))
}

fn parse_comparator(text: &str) -> Option<(Comparator, Option<&str>)> {
    match text {
        "<=" | "≤" => return Some((Comparator::AtMost, None)),
        ">=" | "≥" => return Some((Comparator::AtLeast, None)),
        _ => {}
    }
    let tol = text.strip_prefix("=±").or_else(|| text.strip_prefix("=+-"))?;
    match tol.strip_suffix('%') {
        Some(p) => {
            let percent: f64 = p.parse().ok().filter(|p: &f64| *p >= 0.0)?;
            Some((Comparator::WithinPercent { percent }, None))
        }
        None => Some((Comparator::Within { tol: 0.0 }, Some(tol))),
    }
}

fn parse_range(text: &str) -> Option<Range> {
    match text.split_once("..") {
        Some((a, b)) => Some(Range { lo: parse_value(a)?, hi: parse_value(b)? }),
        None => parse_value(text).map(|v| Range { lo: v, hi: v }),
    }
}

fn parse_line(body: &str) -> Result<SpecTarget, String> {
    let tokens: Vec<&str> = body.split_whitespace().collect();
    if tokens.len() < 4 {
        return Err("expected `spec_id comparator value unit [conditions]`".into());
    }
    let id = SpecId::parse(tokens[0]).ok_or_else(|| format!("unknown spec id `{}`", tokens[0]))?;
    let (mut comparator, tol) =
        parse_comparator(tokens[1]).ok_or_else(|| format!("unknown comparator `{}`", tokens[1]))?;
    let unit = tokens[3];
    let (prefix, base) = split_unit(unit).ok_or_else(|| format!("unknown unit `{unit}`"))?;
    if !id.units().contains(&base) {
        return Err(format!("`{id}` is measured in {}, not `{unit}`", id.units().join(" or ")));
    }
    let bad_number = |t: &str| format!("`{t}` is not a number");
    let value = scaled(tokens[2], &prefix).ok_or_else(|| bad_number(tokens[2]))?;
    let scale = scaled("1", &prefix).expect("known prefix");
    if let Some(t) = tol {
        let tol = scaled(t, &prefix).filter(|t| *t >= 0.0).ok_or_else(|| bad_number(t))?;
        comparator = Comparator::Within { tol };
    }

    let mut conditions = Conditions { text: tokens[4..].join(" "), ..Conditions::default() };
    let mut seen = Vec::new();
    for tok in &tokens[4..] {
        let (key, val) = tok.split_once('=').ok_or_else(|| format!("condition `{tok}` is not `key=value`"))?;
        let &(_, ranged) = id
            .conditions()
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| format!("condition `{key}` does not apply to `{id}`"))?;
        if seen.contains(&key) {
            return Err(format!("condition `{key}` given twice"));
        }
        seen.push(key);
        let range = parse_range(val).ok_or_else(|| format!("`{val}` is not a value or range"))?;
        if !ranged && range.lo != range.hi {
            return Err(format!("condition `{key}` takes a single value"));
        }
        if ranged && range.lo == range.hi {
            return Err(format!("condition `{key}` needs a range `lo..hi`"));
        }
        match key {
            "vin" => conditions.vin = Some(range),
            "load" => conditions.load = Some(range),
            "temp" => conditions.temp = Some(range),
            "freq" if range.lo > 0.0 => conditions.freq = Some(range.lo),
            "at" if range.lo > 0.0 => conditions.at = Some(range.lo),
            "points" if range.lo >= 2.0 && range.lo.fract() == 0.0 => conditions.points = Some(range.lo as usize),
            _ => return Err(format!("condition `{key}` out of range: {val}")),
        }
    }
    Ok(SpecTarget { id, comparator, value, unit: unit.to_string(), scale, conditions })
}

/// Parse a targets file; `#` starts a comment.
pub fn parse_targets(text: &str) -> Result<Vec<SpecTarget>, TargetError> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let body = raw.split('#').next().unwrap_or("").trim();
            (!body.is_empty()).then(|| parse_line(body).map_err(|message| TargetError { line: i + 1, message }))
        })
        .collect()
}
