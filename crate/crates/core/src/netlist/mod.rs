//! Circuit representation, the plain-text netlist dialect, and validation.

mod parse;
mod value;
mod waveform;
mod write;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::devices::{DeviceError, ElementKind};

pub use parse::parse_netlist;
pub use value::{format_value, parse_value};
pub use waveform::{Waveform, WaveformError};
pub use write::serialize;

/// Name of the reference node.
pub const GROUND: &str = "0";

/// Default analysis temperature, °C.
pub const DEFAULT_TEMPERATURE: f64 = 27.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub nodes: Vec<String>,
    pub kind: ElementKind,
}

impl Element {
    pub fn new(name: impl Into<String>, nodes: &[&str], kind: ElementKind) -> Self {
        Self {
            name: name.into(),
            nodes: nodes.iter().map(|n| n.to_string()).collect(),
            kind,
        }
    }
}

/// The error-amplifier input where loop-gain analysis opens the loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopBreak {
    pub element: String,
    /// 0 for the non-inverting input, 1 for the inverting one.
    pub terminal: usize,
}

/// Something an analysis can report a value for.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Probe {
    Voltage(String),
    /// Current through an element, entering its first terminal. For a
    /// voltage source this is reported as the current it delivers.
    Current(String),
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probe::Voltage(n) => write!(f, "v({n})"),
            Probe::Current(e) => write!(f, "i({e})"),
        }
    }
}

impl Probe {
    /// Parse `v(node)`, `i(element)`, or a bare node name.
    pub fn parse(text: &str) -> Option<Probe> {
        let lower = text.to_ascii_lowercase();
        let inner = |prefix: &str| {
            lower
                .strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .map(|_| text[prefix.len()..text.len() - 1].trim().to_string())
        };
        if let Some(n) = inner("v(") {
            return (!n.is_empty()).then_some(Probe::Voltage(n));
        }
        if let Some(e) = inner("i(") {
            return (!e.is_empty()).then_some(Probe::Current(e));
        }
        (!text.is_empty() && !text.contains(['(', ')', ' '])).then(|| Probe::Voltage(text.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: unknown element type `{name}`")]
    UnknownElement { line: usize, name: String },
    #[error("line {line}: duplicate element name `{name}`")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: {source}")]
    Device { line: usize, source: DeviceError },
    #[error("line {line}: {source}")]
    Waveform { line: usize, source: WaveformError },
    #[error("invalid circuit: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("duplicate element name `{0}`")]
    Duplicate(String),
    #[error("no element named `{0}`")]
    NoSuchElement(String),
}

/// One broken circuit invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    GroundMissing,
    DuplicateName(String),
    TerminalCount { element: String, expected: usize, found: usize },
    AllTerminalsShorted { element: String, node: String },
    DanglingNode { node: String, element: String },
    BadLoopBreak(String),
    BadProbe(String),
    EmptyName,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GroundMissing => write!(f, "ground node missing"),
            Violation::DuplicateName(n) => write!(f, "duplicate element name `{n}`"),
            Violation::TerminalCount { element, expected, found } => {
                write!(f, "element `{element}` needs {expected} terminals, has {found}")
            }
            Violation::AllTerminalsShorted { element, node } => {
                write!(f, "element `{element}` has every terminal on node `{node}`")
            }
            Violation::DanglingNode { node, element } => {
                write!(f, "node `{node}` is only connected to `{element}`")
            }
            Violation::BadLoopBreak(m) => write!(f, "loop break: {m}"),
            Violation::BadProbe(m) => write!(f, "probe: {m}"),
            Violation::EmptyName => write!(f, "element with empty name"),
        }
    }
}

/// A named-node element graph plus the analysis temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    elements: Vec<Element>,
    pub temperature: f64,
    pub loop_break: Option<LoopBreak>,
    /// Named probes, in declaration order.
    pub probes: Vec<(String, Probe)>,
}

impl Default for Circuit {
    fn default() -> Self {
        Self::new()
    }
}

impl Circuit {
    pub fn new() -> Self {
        Self {
            elements: Vec::new(),
            temperature: DEFAULT_TEMPERATURE,
            loop_break: None,
            probes: Vec::new(),
        }
    }

    pub fn add(&mut self, element: Element) -> Result<(), NetlistError> {
        if self.element(&element.name).is_some() {
            return Err(NetlistError::Duplicate(element.name));
        }
        self.elements.push(element);
        Ok(())
    }

    pub fn with(mut self, element: Element) -> Result<Self, NetlistError> {
        self.add(element)?;
        Ok(self)
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name.eq_ignore_ascii_case(name))
    }

    pub fn element_mut(&mut self, name: &str) -> Option<&mut Element> {
        self.elements.iter_mut().find(|e| e.name.eq_ignore_ascii_case(name))
    }

    pub fn remove(&mut self, name: &str) -> Result<Element, NetlistError> {
        let idx = self
            .elements
            .iter()
            .position(|e| e.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| NetlistError::NoSuchElement(name.to_string()))?;
        Ok(self.elements.remove(idx))
    }

    /// Replace the stimulus of an independent source.
    pub fn set_waveform(&mut self, name: &str, waveform: Waveform) -> Result<(), NetlistError> {
        let el = self
            .element_mut(name)
            .ok_or_else(|| NetlistError::NoSuchElement(name.to_string()))?;
        match &mut el.kind {
            ElementKind::VoltageSource { waveform: w, .. } | ElementKind::CurrentSource { waveform: w } => {
                *w = waveform;
                Ok(())
            }
            _ => Err(NetlistError::NoSuchElement(format!("{name} (not a source)"))),
        }
    }

    pub fn add_probe(&mut self, alias: impl Into<String>, probe: Probe) {
        let alias = alias.into();
        self.probes.retain(|(a, _)| a != &alias);
        self.probes.push((alias, probe));
    }

    /// Resolve a probe alias, `v(..)`/`i(..)` form, or bare node name.
    pub fn resolve_probe(&self, text: &str) -> Option<Probe> {
        if let Some((_, p)) = self.probes.iter().find(|(a, _)| a.eq_ignore_ascii_case(text)) {
            return Some(p.clone());
        }
        Probe::parse(text)
    }

    /// Node names in order of first reference; ground included when used.
    pub fn nodes(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for el in &self.elements {
            for n in &el.nodes {
                if seen.insert(n.as_str()) {
                    out.push(n.clone());
                }
            }
        }
        out
    }

    pub fn has_node(&self, node: &str) -> bool {
        self.elements.iter().any(|e| e.nodes.iter().any(|n| n == node))
    }
}

/// Check every circuit invariant and report all violations.
pub fn validate(circuit: &Circuit) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if !circuit.has_node(GROUND) {
        violations.push(Violation::GroundMissing);
    }
    let mut names = HashSet::new();
    // node -> (terminal count, first element)
    let mut usage: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for el in circuit.elements() {
        if el.name.is_empty() {
            violations.push(Violation::EmptyName);
        }
        if !names.insert(el.name.to_ascii_lowercase()) {
            violations.push(Violation::DuplicateName(el.name.clone()));
        }
        let expected = el.kind.terminal_count();
        if el.nodes.len() != expected {
            violations.push(Violation::TerminalCount {
                element: el.name.clone(),
                expected,
                found: el.nodes.len(),
            });
        }
        if let Some(first) = el.nodes.first() {
            if el.nodes.len() > 1 && el.nodes.iter().all(|n| n == first) {
                violations.push(Violation::AllTerminalsShorted {
                    element: el.name.clone(),
                    node: first.clone(),
                });
            }
        }
        for n in &el.nodes {
            let entry = usage.entry(n.as_str()).or_insert((0, el.name.as_str()));
            entry.0 += 1;
        }
    }
    for (node, (count, element)) in &usage {
        if *count < 2 && *node != GROUND {
            violations.push(Violation::DanglingNode {
                node: node.to_string(),
                element: element.to_string(),
            });
        }
    }
    if let Some(lb) = &circuit.loop_break {
        match circuit.element(&lb.element) {
            Some(Element { kind: ElementKind::ErrorAmp(_), .. }) if lb.terminal < 2 => {}
            Some(_) => violations.push(Violation::BadLoopBreak(format!(
                "`{}` terminal {} is not an error-amplifier input",
                lb.element, lb.terminal
            ))),
            None => violations.push(Violation::BadLoopBreak(format!("no element `{}`", lb.element))),
        }
    }
    for (alias, probe) in &circuit.probes {
        let ok = match probe {
            Probe::Voltage(n) => n == GROUND || circuit.has_node(n),
            Probe::Current(e) => circuit.element(e).is_some(),
        };
        if !ok {
            violations.push(Violation::BadProbe(format!("`{alias}` refers to unknown {probe}")));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn divider() -> Circuit {
        let mut c = Circuit::new();
        c.add(Element::new(
            "V1",
            &["in", "0"],
            ElementKind::VoltageSource { waveform: Waveform::Dc(10.0), tc: 0.0 },
        ))
        .unwrap();
        c.add(Element::new("R1", &["in", "mid"], ElementKind::resistor(1e3).unwrap())).unwrap();
        c.add(Element::new("R2", &["mid", "0"], ElementKind::resistor(1e3).unwrap())).unwrap();
        c
    }

    #[test]
    fn valid_divider() {
        assert_eq!(validate(&divider()), Ok(()));
    }

    #[test]
    fn missing_ground() {
        let mut c = Circuit::new();
        c.add(Element::new("R1", &["a", "b"], ElementKind::resistor(1.0).unwrap())).unwrap();
        c.add(Element::new("R2", &["a", "b"], ElementKind::resistor(1.0).unwrap())).unwrap();
        let v = validate(&c).unwrap_err();
        assert!(v.contains(&Violation::GroundMissing));
        assert_eq!(Violation::GroundMissing.to_string(), "ground node missing");
    }

    #[test]
    fn shorted_element_is_named() {
        let mut c = divider();
        c.add(Element::new("R3", &["a", "a"], ElementKind::resistor(1.0).unwrap())).unwrap();
        let v = validate(&c).unwrap_err();
        assert!(v.iter().any(|x| matches!(x, Violation::AllTerminalsShorted { element, .. } if element == "R3")));
    }

    #[test]
    fn all_violations_reported() {
        let mut c = Circuit::new();
        c.add(Element::new("R1", &["a", "a"], ElementKind::resistor(1.0).unwrap())).unwrap();
        c.add(Element::new("R2", &["b", "c"], ElementKind::resistor(1.0).unwrap())).unwrap();
        let v = validate(&c).unwrap_err();
        assert!(v.len() >= 4, "{v:?}");
    }

    #[test]
    fn probe_forms() {
        assert_eq!(Probe::parse("v(out)"), Some(Probe::Voltage("out".into())));
        assert_eq!(Probe::parse("I(VIN)"), Some(Probe::Current("VIN".into())));
        assert_eq!(Probe::parse("out"), Some(Probe::Voltage("out".into())));
        assert_eq!(Probe::parse("v()"), None);
    }
}
