use num_complex::Complex64;
use rayon::prelude::*;

use crate::devices::ElementKind;
use crate::netlist::{Circuit, Probe, GROUND};

use super::dc::{dc_eval, map_state, OpPoint};
use super::linalg::{solve, Matrix};
use super::mna::{assemble, capacitance_matrix, Layout};
use super::{EngineError, SimOptions, Table};

/// `n` log-spaced points per decade from `f_start` to `f_stop` inclusive.
pub fn log_grid(f_start: f64, f_stop: f64, points_per_decade: usize) -> Vec<f64> {
    let decades = (f_stop / f_start).log10();
    let n = ((decades * points_per_decade as f64).round() as usize).max(1);
    (0..=n).map(|i| f_start * 10f64.powf(decades * i as f64 / n as f64)).collect()
}

pub(crate) fn check_grid(freqs: &[f64]) -> Result<(), EngineError> {
    if freqs.is_empty() {
        return Err(EngineError::Grid("empty frequency grid".into()));
    }
    if freqs.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(EngineError::Grid("frequencies must be finite and non-negative".into()));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EngineError::Grid("frequencies must be strictly increasing".into()));
    }
    Ok(())
}

/// Small-signal model of a circuit about an operating point.
pub(crate) struct Linearized {
    pub layout: Layout,
    g: Matrix<f64>,
    c: Matrix<f64>,
}

impl Linearized {
    pub fn new(circuit: &Circuit, state: &[f64], latches: &[bool], opts: &SimOptions) -> Self {
        let layout = Layout::new(circuit);
        let e = dc_eval(circuit, latches, opts, 0.0);
        let g = assemble(circuit, &layout, state, &e).jac;
        let c = capacitance_matrix(&layout);
        Self { layout, g, c }
    }

    pub fn solve(&self, freq: f64, rhs: &[Complex64]) -> Result<Vec<Complex64>, EngineError> {
        let w = 2.0 * std::f64::consts::PI * freq;
        let n = self.layout.size();
        let mut y = Matrix::<Complex64>::zeros(n);
        for (k, (g, c)) in self.g.data.iter().zip(&self.c.data).enumerate() {
            y.data[k] = Complex64::new(*g, w * c);
        }
        let mut x = rhs.to_vec();
        solve(&mut y, &mut x).map_err(|k| EngineError::Singular(self.layout.names[k].clone()))?;
        Ok(x)
    }

    /// Right-hand side for a unit excitation at an independent source.
    pub fn excitation(&self, circuit: &Circuit, source: &str) -> Result<Vec<Complex64>, EngineError> {
        let idx = circuit
            .elements()
            .iter()
            .position(|e| e.name.eq_ignore_ascii_case(source))
            .ok_or_else(|| EngineError::UnknownSource(source.to_string()))?;
        let s = &self.layout.slots[idx];
        let mut b = vec![Complex64::new(0.0, 0.0); self.layout.size()];
        match &circuit.elements()[idx].kind {
            ElementKind::VoltageSource { .. } => b[s.branch.unwrap()] = Complex64::new(1.0, 0.0),
            ElementKind::CurrentSource { .. } => {
                if let Some(a) = s.terms[0] {
                    b[a] -= 1.0;
                }
                if let Some(k) = s.terms[1] {
                    b[k] += 1.0;
                }
            }
            _ => return Err(EngineError::UnknownSource(format!("{source} (not an independent source)"))),
        }
        Ok(b)
    }

    /// Small-signal value of a probe in a solved system.
    pub fn probe(
        &self,
        circuit: &Circuit,
        probe: &Probe,
        x: &[Complex64],
        freq: f64,
        input: &str,
    ) -> Result<Complex64, EngineError> {
        let zero = Complex64::new(0.0, 0.0);
        let node = |n: &str| -> Option<Complex64> {
            if n == GROUND {
                Some(zero)
            } else {
                self.layout.index_of(n).filter(|k| *k < self.layout.n_nodes).map(|k| x[k])
            }
        };
        let v = |u: Option<usize>| u.map_or(zero, |k| x[k]);
        match probe {
            Probe::Voltage(n) => node(n).ok_or_else(|| EngineError::UnknownProbe(probe.to_string())),
            Probe::Current(name) => {
                let idx = circuit
                    .elements()
                    .iter()
                    .position(|e| e.name.eq_ignore_ascii_case(name))
                    .ok_or_else(|| EngineError::UnknownProbe(probe.to_string()))?;
                let s = &self.layout.slots[idx];
                let t = &s.terms;
                let w = 2.0 * std::f64::consts::PI * freq;
                match &circuit.elements()[idx].kind {
                    ElementKind::Resistor { resistance } => Ok((v(t[0]) - v(t[1])) / resistance),
                    ElementKind::Capacitor { capacitance, esr } => Ok(if *esr > 0.0 {
                        (v(t[0]) - v(s.internal)) / esr
                    } else {
                        (v(t[0]) - v(t[1])) * Complex64::new(0.0, w * capacitance)
                    }),
                    ElementKind::VoltageSource { .. } | ElementKind::PorComparator(_) => Ok(-x[s.branch.unwrap()]),
                    ElementKind::CurrentSource { .. } => {
                        Ok(if name.eq_ignore_ascii_case(input) { Complex64::new(1.0, 0.0) } else { zero })
                    }
                    ElementKind::Vccs { gm } => Ok((v(t[2]) - v(t[3])) * gm),
                    _ => Err(EngineError::UnknownProbe(format!("{probe} (no small-signal current for this element)"))),
                }
            }
        }
    }
}

/// Complex transfer from a unit source excitation to each probe.
#[derive(Debug, Clone, PartialEq)]
pub struct AcResponse {
    pub freqs: Vec<f64>,
    pub outputs: Vec<String>,
    /// One series per output, aligned with `freqs`.
    pub values: Vec<Vec<Complex64>>,
}

impl AcResponse {
    pub fn series(&self, output: &str) -> Option<&[Complex64]> {
        let k = self.outputs.iter().position(|o| o.eq_ignore_ascii_case(output))?;
        Some(&self.values[k])
    }

    pub fn magnitude_db(&self, output: &str) -> Option<Vec<f64>> {
        self.series(output).map(|s| s.iter().map(|v| 20.0 * v.norm().log10()).collect())
    }

    /// Phase in degrees, unwrapped along the grid.
    pub fn phase_deg(&self, output: &str) -> Option<Vec<f64>> {
        self.series(output).map(unwrap_phase)
    }

    /// Rejection `-20 log10 |H|`, positive when the output is attenuated.
    pub fn psrr_db(&self, output: &str) -> Option<Vec<f64>> {
        self.magnitude_db(output).map(|m| m.into_iter().map(|x| -x).collect())
    }

    /// Frequency, then magnitude and phase per output.
    pub fn table(&self) -> Table {
        let mut headers = vec!["frequency (Hz)".to_string()];
        let mut cols = Vec::new();
        for o in &self.outputs {
            headers.push(format!("|{o}| (dB)"));
            headers.push(format!("phase {o} (deg)"));
            cols.push(self.magnitude_db(o).unwrap());
            cols.push(self.phase_deg(o).unwrap());
        }
        let rows = (0..self.freqs.len())
            .map(|i| std::iter::once(self.freqs[i]).chain(cols.iter().map(|c| c[i])).collect())
            .collect();
        Table { headers, rows }
    }
}

/// Continuous phase in degrees: each step is taken as the wrapped
/// difference from its predecessor.
pub fn unwrap_phase(values: &[Complex64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let p = v.arg().to_degrees();
        if i == 0 {
            out.push(p);
        } else {
            let prev = values[i - 1].arg().to_degrees();
            out.push(out[i - 1] + wrap_deg(p - prev));
        }
    }
    out
}

pub(crate) fn wrap_deg(d: f64) -> f64 {
    let mut d = d % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

pub(crate) fn ac_analysis(
    circuit: &Circuit,
    op: &OpPoint,
    freqs: &[f64],
    input: &str,
    outputs: &[&str],
    opts: &SimOptions,
) -> Result<AcResponse, EngineError> {
    check_grid(freqs)?;
    let probes = outputs
        .iter()
        .map(|o| circuit.resolve_probe(o).ok_or_else(|| EngineError::UnknownProbe(o.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let layout = Layout::new(circuit);
    let state = map_state(&layout, op, &[]);
    let lin = Linearized::new(circuit, &state, &op.latches, opts);
    let rhs = lin.excitation(circuit, input)?;
    let per_freq = freqs
        .par_iter()
        .map(|&f| {
            let x = lin.solve(f, &rhs)?;
            probes.iter().map(|p| lin.probe(circuit, p, &x, f, input)).collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let values = (0..probes.len()).map(|k| per_freq.iter().map(|row| row[k]).collect()).collect();
    Ok(AcResponse { freqs: freqs.to_vec(), outputs: outputs.iter().map(|s| s.to_string()).collect(), values })
}
