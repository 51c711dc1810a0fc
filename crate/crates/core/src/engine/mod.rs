//! Modified nodal analysis: DC operating point, sweeps, AC, transient and
//! loop gain.
//!
//! Every analysis is a pure function of an immutable [`Circuit`]. The free
//! functions use [`SimOptions::default`]; [`Simulator`] carries custom
//! tolerances.
//!
//! ```
//! use ldo_bench::engine::dc_operating_point;
//! use ldo_bench::netlist::parse_netlist;
//!
//! let c = parse_netlist("V1 in 0 DC 10\nR1 in mid 1k\nR2 mid 0 1k\n").unwrap();
//! let op = dc_operating_point(&c).unwrap();
//! assert!((op.voltage("mid").unwrap() - 5.0).abs() < 1e-9);
//! ```

mod ac;
mod dc;
mod linalg;
mod loopgain;
mod mna;
mod sweep;
mod tran;

use thiserror::Error;

use crate::netlist::{format_value, validate, Circuit, Probe, Violation, GROUND};

pub use ac::{log_grid, unwrap_phase, AcResponse};
pub use dc::{ElementOp, OpPoint, SolveStats, Strategy};
pub use loopgain::{LoopGain, MIN_POINTS_PER_DECADE};
pub use sweep::{apply_target, Spacing, SweepPoint, SweepSpec, SweepTarget, SweepTrace};
pub use tran::{AdaptiveStep, StepPolicy, TranStats, TransientTrace};

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub reltol: f64,
    /// Absolute voltage tolerance, V.
    pub v_abstol: f64,
    /// Absolute current tolerance, A.
    pub i_abstol: f64,
    /// Conductance across every transistor, limiter and switch, S.
    pub gmin: f64,
    pub max_iterations: usize,
    /// Largest node-voltage change per Newton update, V.
    pub max_step: f64,
    /// Number of source-stepping increments.
    pub source_steps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            reltol: 1e-4,
            v_abstol: 1e-6,
            i_abstol: 1e-12,
            gmin: 1e-12,
            max_iterations: 150,
            max_step: 2.0,
            source_steps: 20,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid circuit: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("singular matrix; suspect unknown `{0}`")]
    Singular(String),
    #[error("no convergence: last residual {residual:e}, update norms {trace:?}")]
    NonConvergence { residual: f64, trace: Vec<f64> },
    #[error("time step too small at t = {time:e} s (dt = {dt:e} s): {reason}")]
    TimestepTooSmall { time: f64, dt: f64, reason: String },
    #[error("unknown probe `{0}`")]
    UnknownProbe(String),
    #[error("unknown source `{0}`")]
    UnknownSource(String),
    #[error("no loop break point marked")]
    NoBreakPoint,
    #[error("no unity-gain crossing: |T| is {first_db:.2} dB at {f_first} Hz and {last_db:.2} dB at {f_last} Hz")]
    NoCrossing { f_first: f64, first_db: f64, f_last: f64, last_db: f64 },
    #[error("frequency grid: {0}")]
    Grid(String),
    #[error("sweep: {0}")]
    Sweep(String),
    #[error("{0}")]
    Parameter(String),
}

/// Node and element names for probe lookup in stored results.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SignalNames {
    pub nodes: Vec<String>,
    pub elements: Vec<String>,
    pub aliases: Vec<(String, Probe)>,
}

impl SignalNames {
    pub fn new(circuit: &Circuit) -> Self {
        Self {
            nodes: circuit.nodes().into_iter().filter(|n| n != GROUND).collect(),
            elements: circuit.elements().iter().map(|e| e.name.clone()).collect(),
            aliases: circuit.probes.clone(),
        }
    }

    pub fn node_value(&self, node: &str, voltages: &[f64]) -> Option<f64> {
        if node == GROUND {
            return Some(0.0);
        }
        self.nodes.iter().position(|n| n == node).map(|k| voltages[k])
    }

    pub fn lookup(&self, text: &str, voltages: &[f64], currents: &[f64]) -> Option<f64> {
        let probe = match self.aliases.iter().find(|(a, _)| a.eq_ignore_ascii_case(text)) {
            Some((_, p)) => p.clone(),
            None => Probe::parse(text)?,
        };
        match probe {
            Probe::Voltage(n) => self.node_value(&n, voltages),
            Probe::Current(e) => self.elements.iter().position(|m| m.eq_ignore_ascii_case(&e)).map(|k| currents[k]),
        }
    }
}

/// CSV column header for a probe, with its unit.
pub(crate) fn probe_header(probe: &str) -> String {
    let unit = match Probe::parse(probe) {
        Some(Probe::Current(_)) => "A",
        _ if probe.to_ascii_lowercase().starts_with('i') => "A",
        _ => "V",
    };
    format!("{probe} ({unit})")
}

/// Rows of numbers under named columns, exportable as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| format_value(if v == 0.0 { 0.0 } else { v }))).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Analyses with explicit solver options.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Simulator {
    pub options: SimOptions,
}

impl Simulator {
    pub fn new(options: SimOptions) -> Self {
        Self { options }
    }

    pub fn dc_operating_point(&self, circuit: &Circuit) -> Result<OpPoint, EngineError> {
        validate(circuit).map_err(EngineError::Invalid)?;
        dc::operating_point_from(circuit, &self.options, None, 0.0)
    }

    /// Operating point starting from a previous solution (and its
    /// comparator states).
    pub fn dc_operating_point_from(&self, circuit: &Circuit, guess: &OpPoint) -> Result<OpPoint, EngineError> {
        validate(circuit).map_err(EngineError::Invalid)?;
        dc::operating_point_from(circuit, &self.options, Some(guess), 0.0)
    }

    pub fn dc_sweep(&self, circuit: &Circuit, spec: &SweepSpec) -> Result<SweepTrace, EngineError> {
        validate(circuit).map_err(EngineError::Invalid)?;
        sweep::dc_sweep(circuit, spec, &self.options)
    }

    pub fn ac_analysis(
        &self,
        circuit: &Circuit,
        op: &OpPoint,
        freqs: &[f64],
        input: &str,
        outputs: &[&str],
    ) -> Result<AcResponse, EngineError> {
        validate(circuit).map_err(EngineError::Invalid)?;
        ac::ac_analysis(circuit, op, freqs, input, outputs, &self.options)
    }

    pub fn transient(&self, circuit: &Circuit, t_stop: f64, policy: &StepPolicy) -> Result<TransientTrace, EngineError> {
        validate(circuit).map_err(EngineError::Invalid)?;
        tran::transient(circuit, t_stop, policy, &self.options)
    }

    /// Loop gain at the circuit's break point about a given operating point.
    pub fn loop_gain_at(&self, circuit: &Circuit, op: &OpPoint, freqs: &[f64]) -> Result<LoopGain, EngineError> {
        validate(circuit).map_err(EngineError::Invalid)?;
        loopgain::loop_gain(circuit, op, freqs, &self.options)
    }

    pub fn loop_gain(&self, circuit: &Circuit, freqs: &[f64]) -> Result<LoopGain, EngineError> {
        if circuit.loop_break.is_none() {
            return Err(EngineError::NoBreakPoint);
        }
        let op = self.dc_operating_point(circuit)?;
        self.loop_gain_at(circuit, &op, freqs)
    }
}

pub fn dc_operating_point(circuit: &Circuit) -> Result<OpPoint, EngineError> {
    Simulator::default().dc_operating_point(circuit)
}

pub fn dc_sweep(circuit: &Circuit, spec: &SweepSpec) -> Result<SweepTrace, EngineError> {
    Simulator::default().dc_sweep(circuit, spec)
}

pub fn ac_analysis(
    circuit: &Circuit,
    op: &OpPoint,
    freqs: &[f64],
    input: &str,
    outputs: &[&str],
) -> Result<AcResponse, EngineError> {
    Simulator::default().ac_analysis(circuit, op, freqs, input, outputs)
}

pub fn transient(circuit: &Circuit, t_stop: f64, policy: &StepPolicy) -> Result<TransientTrace, EngineError> {
    Simulator::default().transient(circuit, t_stop, policy)
}

pub fn loop_gain(circuit: &Circuit, freqs: &[f64]) -> Result<LoopGain, EngineError> {
    Simulator::default().loop_gain(circuit, freqs)
}

#[cfg(test)]
mod tests;
