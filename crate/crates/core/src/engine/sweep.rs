use crate::devices::ElementKind;
use crate::netlist::{Circuit, Waveform};

use super::dc::{operating_point_from, OpPoint};
use super::{EngineError, SimOptions, Table};

#[derive(Debug, Clone, PartialEq)]
pub enum SweepTarget {
    /// DC level of an independent source.
    Source(String),
    Temperature,
    /// Primary value of an element: resistance, capacitance, transconductance
    /// or source level.
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub target: SweepTarget,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl SweepSpec {
    pub fn linear(target: SweepTarget, start: f64, stop: f64, points: usize) -> Self {
        Self { target, start, stop, points, spacing: Spacing::Linear }
    }

    pub fn log(target: SweepTarget, start: f64, stop: f64, points: usize) -> Self {
        Self { target, start, stop, points, spacing: Spacing::Log }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Sweep(m.to_string()));
        if self.points == 0 {
            return bad("at least one point is required");
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return bad("bounds must be finite");
        }
        if self.start == self.stop {
            return bad("start and stop must differ");
        }
        if self.spacing == Spacing::Log && (self.start <= 0.0 || self.stop <= 0.0) {
            return bad("log spacing needs positive bounds");
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.start];
        }
        (0..n)
            .map(|i| {
                let u = i as f64 / (n - 1) as f64;
                if i == n - 1 {
                    return self.stop;
                }
                match self.spacing {
                    Spacing::Linear => self.start + (self.stop - self.start) * u,
                    Spacing::Log => self.start * (self.stop / self.start).powf(u),
                }
            })
            .collect()
    }
}

/// Set a sweep target on a circuit.
pub fn apply_target(circuit: &mut Circuit, target: &SweepTarget, value: f64) -> Result<(), EngineError> {
    let missing = |n: &str| EngineError::Sweep(format!("no element `{n}`"));
    match target {
        SweepTarget::Temperature => circuit.temperature = value,
        SweepTarget::Source(name) => circuit.set_waveform(name, Waveform::Dc(value)).map_err(|_| missing(name))?,
        SweepTarget::Parameter(name) => {
            let el = circuit.element_mut(name).ok_or_else(|| missing(name))?;
            let positive = |v: f64| {
                if v > 0.0 {
                    Ok(v)
                } else {
                    Err(EngineError::Sweep(format!("`{name}` needs a positive value, got {v}")))
                }
            };
            match &mut el.kind {
                ElementKind::Resistor { resistance } => *resistance = positive(value)?,
                ElementKind::Capacitor { capacitance, .. } => *capacitance = positive(value)?,
                ElementKind::Vccs { gm } => *gm = value,
                ElementKind::VoltageSource { waveform, .. } | ElementKind::CurrentSource { waveform } => {
                    *waveform = Waveform::Dc(value)
                }
                _ => return Err(EngineError::Sweep(format!("`{name}` has no primary value"))),
            }
        }
    }
    Ok(())
}

fn target_unit(circuit: &Circuit, target: &SweepTarget) -> &'static str {
    let name = match target {
        SweepTarget::Temperature => return "°C",
        SweepTarget::Source(n) | SweepTarget::Parameter(n) => n,
    };
    match circuit.element(name).map(|e| &e.kind) {
        Some(ElementKind::Resistor { .. }) => "Ω",
        Some(ElementKind::Capacitor { .. }) => "F",
        Some(ElementKind::Vccs { .. }) => "S",
        Some(ElementKind::CurrentSource { .. }) => "A",
        _ => "V",
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub op: Option<OpPoint>,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn converged(&self) -> bool {
        self.op.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct SweepTrace {
    pub target: SweepTarget,
    pub label: String,
    pub unit: &'static str,
    pub points: Vec<SweepPoint>,
}

impl SweepTrace {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.points.iter().all(SweepPoint::converged)
    }

    /// A probe at every point; `None` where the point did not converge.
    pub fn probe(&self, probe: &str) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.op.as_ref().and_then(|op| op.value(probe))).collect()
    }

    /// Swept value followed by each probe; unconverged points are NaN.
    pub fn table(&self, probes: &[&str]) -> Table {
        let mut headers = vec![format!("{} ({})", self.label, self.unit)];
        headers.extend(probes.iter().map(|p| super::probe_header(p)));
        let cols: Vec<Vec<Option<f64>>> = probes.iter().map(|p| self.probe(p)).collect();
        let rows = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| std::iter::once(p.value).chain(cols.iter().map(|c| c[i].unwrap_or(f64::NAN))).collect())
            .collect();
        Table { headers, rows }
    }
}

pub(crate) fn dc_sweep(circuit: &Circuit, spec: &SweepSpec, opts: &SimOptions) -> Result<SweepTrace, EngineError> {
    spec.validate()?;
    let label = match &spec.target {
        SweepTarget::Temperature => "temperature".to_string(),
        SweepTarget::Source(n) | SweepTarget::Parameter(n) => n.to_ascii_lowercase(),
    };
    let mut work = circuit.clone();
    apply_target(&mut work, &spec.target, spec.start)?;
    let mut prev: Option<OpPoint> = None;
    let mut points = Vec::with_capacity(spec.points);
    for value in spec.values() {
        apply_target(&mut work, &spec.target, value)?;
        match operating_point_from(&work, opts, prev.as_ref(), 0.0) {
            Ok(op) => {
                prev = Some(op.clone());
                points.push(SweepPoint { value, op: Some(op), error: None });
            }
            Err(e) => points.push(SweepPoint { value, op: None, error: Some(e.to_string()) }),
        }
    }
    Ok(SweepTrace { unit: target_unit(circuit, &spec.target), target: spec.target.clone(), label, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_log_values() {
        let s = SweepSpec::linear(SweepTarget::Temperature, 0.0, 10.0, 11);
        assert_eq!(s.values()[3], 3.0);
        let l = SweepSpec::log(SweepTarget::Temperature, 1.0, 1000.0, 4);
        let v = l.values();
        assert!((v[1] - 10.0).abs() < 1e-12 && v[3] == 1000.0);
        assert!(SweepSpec::log(SweepTarget::Temperature, 0.0, 1.0, 3).validate().is_err());
    }
}
