use num_complex::Complex64;
use rayon::prelude::*;

use crate::netlist::{Circuit, Element, Waveform};
use crate::devices::ElementKind;

use super::ac::{check_grid, unwrap_phase, wrap_deg, AcResponse, Linearized};
use super::dc::{map_state, OpPoint};
use super::{EngineError, SimOptions};

const INJECTION_NODE: &str = "__loop_inj";
const INJECTION_SOURCE: &str = "__VINJ";

/// Return ratio at the marked break point.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopGain {
    /// Single output `T`, the loop gain `-v(return) / v(injected)`.
    pub response: AcResponse,
    pub unity_gain_hz: f64,
    pub phase_margin_deg: f64,
    pub dc_gain_db: f64,
}

struct OpenLoop {
    lin: Linearized,
    ret: usize,
    rhs: Vec<Complex64>,
}

impl OpenLoop {
    fn t(&self, f: f64) -> Result<Complex64, EngineError> {
        let x = self.lin.solve(f, &self.rhs)?;
        Ok(-x[self.ret])
    }
}

fn open_loop(circuit: &Circuit, op: &OpPoint, opts: &SimOptions) -> Result<OpenLoop, EngineError> {
    let lb = circuit.loop_break.as_ref().ok_or(EngineError::NoBreakPoint)?;
    let mut open = circuit.clone();
    open.loop_break = None;
    open.probes.clear();
    let el = open.element_mut(&lb.element).ok_or(EngineError::NoBreakPoint)?;
    if !matches!(el.kind, ElementKind::ErrorAmp(_)) || lb.terminal > 1 {
        return Err(EngineError::NoBreakPoint);
    }
    let ret_node = std::mem::replace(&mut el.nodes[lb.terminal], INJECTION_NODE.to_string());
    let v_ret = op.voltage(&ret_node).unwrap_or(0.0);
    open.add(Element::new(
        INJECTION_SOURCE,
        &[INJECTION_NODE, "0"],
        ElementKind::VoltageSource { waveform: Waveform::Dc(v_ret), tc: 0.0 },
    ))
    .map_err(|e| EngineError::Parameter(e.to_string()))?;
    let mut latches = op.latches.clone();
    latches.push(false);
    let layout = super::mna::Layout::new(&open);
    let state = map_state(&layout, op, &[(INJECTION_NODE.to_string(), v_ret)]);
    let lin = Linearized::new(&open, &state, &latches, opts);
    let ret = lin
        .layout
        .index_of(&ret_node)
        .ok_or_else(|| EngineError::UnknownProbe(format!("v({ret_node})")))?;
    let rhs = lin.excitation(&open, INJECTION_SOURCE)?;
    Ok(OpenLoop { lin, ret, rhs })
}

/// Grids used for loop gain need at least this many points per decade.
pub const MIN_POINTS_PER_DECADE: f64 = 10.0;

pub(crate) fn loop_gain(
    circuit: &Circuit,
    op: &OpPoint,
    freqs: &[f64],
    opts: &SimOptions,
) -> Result<LoopGain, EngineError> {
    check_grid(freqs)?;
    let max_ratio = 10f64.powf(1.0 / MIN_POINTS_PER_DECADE) * (1.0 + 1e-9);
    if freqs[0] <= 0.0 || freqs.windows(2).any(|w| w[1] / w[0] > max_ratio) {
        return Err(EngineError::Grid(format!(
            "loop gain needs positive frequencies with at least {MIN_POINTS_PER_DECADE} points per decade"
        )));
    }
    let ol = open_loop(circuit, op, opts)?;
    let t: Vec<Complex64> = freqs.par_iter().map(|&f| ol.t(f)).collect::<Result<_, _>>()?;
    let dc = ol.t(0.0)?;
    let phase = unwrap_phase(&t);
    let i = t
        .windows(2)
        .position(|w| w[0].norm() >= 1.0 && w[1].norm() < 1.0)
        .ok_or_else(|| EngineError::NoCrossing {
            f_first: freqs[0],
            first_db: 20.0 * t[0].norm().log10(),
            f_last: freqs[freqs.len() - 1],
            last_db: 20.0 * t[t.len() - 1].norm().log10(),
        })?;
    let (mut lo, mut hi) = (freqs[i].ln(), freqs[i + 1].ln());
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ol.t(mid.exp())?.norm() >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let fc = (0.5 * (lo + hi)).exp();
    let tc = ol.t(fc)?;
    let phase_c = phase[i] + wrap_deg(tc.arg().to_degrees() - t[i].arg().to_degrees());
    Ok(LoopGain {
        response: AcResponse { freqs: freqs.to_vec(), outputs: vec!["T".into()], values: vec![t] },
        unity_gain_hz: fc,
        phase_margin_deg: 180.0 + phase_c,
        dc_gain_db: 20.0 * dc.norm().log10(),
    })
}
