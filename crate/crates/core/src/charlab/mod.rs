//! Characterization procedures and spec compliance.
//!
//! Every measurement takes a [`Simulator`](crate::engine::Simulator), a
//! circuit built with the standard regulator element names (see
//! [`crate::ldo`]) and a config struct whose `Default` is the standard
//! test condition. Each result carries its raw trace as a [`Table`].
//!
//! ```
//! use ldo_bench::charlab::{measure_quiescent, QuiescentConfig};
//! use ldo_bench::engine::Simulator;
//! use ldo_bench::ldo::{build_ldo, default_params};
//!
//! let c = build_ldo(&default_params()).unwrap();
//! let iq = measure_quiescent(&Simulator::default(), &c, &QuiescentConfig::default()).unwrap();
//! assert!((iq.enabled - 1.5e-6).abs() < 0.05 * 1.5e-6);
//! ```

mod compliance;
mod dynamic;
mod statics;
mod targets;

#[cfg(test)]
mod tests;

use thiserror::Error;

use crate::engine::{EngineError, OpPoint, Table};
use crate::ldo::LOAD;
use crate::netlist::{Circuit, Waveform};

pub use compliance::{measure_spec, run_compliance, ComplianceReport, SpecResult, Verdict};
pub use dynamic::{
    measure_dc_gain, measure_phase_margin_vs_load, measure_psrr, measure_transient_dv, DcGain, DcGainConfig,
    MarginCurve, MarginCurveConfig, Psrr, PsrrConfig, TransientConfig, TransientDv,
};
pub use statics::{
    measure_current_limit, measure_dropout, measure_line_regulation, measure_load_regulation, measure_quiescent,
    measure_temp_dependence, CurrentLimit, CurrentLimitConfig, Dropout, DropoutConfig, LineConfig,
    LineRegulation, LoadConfig, LoadRegulation, Quiescent, QuiescentConfig, TempConfig, TempDependence,
};
pub use targets::{
    default_targets, parse_targets, Comparator, Conditions, Range, SpecId, SpecTarget, TargetError, DEFAULT_TARGETS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("circuit has no `{0}` element")]
    MissingElement(String),
    #[error("{0}")]
    Precondition(String),
    #[error("no convergence at {label} = {value}: {error}")]
    PointFailed { label: String, value: f64, error: String },
    #[error("output never left the regulation band between {from} V and {to} V")]
    NoRegulationEdge { from: f64, to: f64 },
}

/// Output probe used by every measurement.
pub const OUTPUT: &str = "v(vout)";

fn require(circuit: &Circuit, name: &str) -> Result<(), CharError> {
    circuit.element(name).map(|_| ()).ok_or_else(|| CharError::MissingElement(name.to_string()))
}

fn set_dc(circuit: &mut Circuit, name: &str, value: f64) -> Result<(), CharError> {
    circuit.set_waveform(name, Waveform::Dc(value)).map_err(|_| CharError::MissingElement(name.to_string()))
}

fn with_load(circuit: &Circuit, load: f64) -> Result<Circuit, CharError> {
    let mut c = circuit.clone();
    set_dc(&mut c, LOAD, load)?;
    Ok(c)
}

fn vout(op: &OpPoint) -> Result<f64, CharError> {
    op.value(OUTPUT).ok_or_else(|| CharError::MissingElement("vout".into()))
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn span(y: &[f64]) -> f64 {
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

fn table(headers: &[&str], cols: &[&[f64]]) -> Table {
    let rows = (0..cols.first().map_or(0, |c| c.len())).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows }
}
