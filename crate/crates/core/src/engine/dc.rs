use std::sync::Arc;

use crate::devices::{ElementKind, Region};
use crate::netlist::Circuit;

use super::linalg::{solve, Matrix};
use super::mna::{assemble, System, element_currents, mosfet_eval, next_latches, at, Eval, Kind, Layout, Reactive};
use super::{EngineError, SignalNames, SimOptions};

/// Which stage of the DC solve produced the answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Newton,
    GminStepping,
    SourceStepping,
    /// Shunts toward the previous iterate, relaxed until they vanish.
    PseudoTransient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub strategy: Strategy,
    /// Newton iterations of the final solve.
    pub iterations: usize,
    /// Infinity norm of each Newton update of the final solve.
    pub update_norms: Vec<f64>,
    /// Largest ratio of row residual to its tolerance at the solution.
    pub kcl_ratio: f64,
}

/// Operating data of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementOp {
    pub name: String,
    /// Current entering the first terminal (delivered current for sources).
    pub current: f64,
    pub region: Option<Region>,
    pub gm: Option<f64>,
    pub gds: Option<f64>,
}

/// A converged DC solution.
#[derive(Debug, Clone)]
pub struct OpPoint {
    pub(crate) names: Arc<SignalNames>,
    pub voltages: Vec<f64>,
    pub elements: Vec<ElementOp>,
    /// Sum of the currents delivered by independent voltage sources.
    pub supply_current: f64,
    pub temperature: f64,
    pub stats: SolveStats,
    pub(crate) unknowns: Vec<String>,
    pub(crate) state: Vec<f64>,
    pub(crate) latches: Vec<bool>,
}

impl OpPoint {
    /// Node names, aligned with [`OpPoint::voltages`].
    pub fn nodes(&self) -> &[String] {
        &self.names.nodes
    }

    pub fn voltage(&self, node: &str) -> Option<f64> {
        self.names.node_value(node, &self.voltages)
    }

    pub fn current(&self, element: &str) -> Option<f64> {
        self.elements.iter().find(|e| e.name.eq_ignore_ascii_case(element)).map(|e| e.current)
    }

    pub fn element(&self, name: &str) -> Option<&ElementOp> {
        self.elements.iter().find(|e| e.name.eq_ignore_ascii_case(name))
    }

    /// Branch currents of voltage-defined elements, by element name.
    pub fn branch_currents(&self) -> Vec<(String, f64)> {
        self.unknowns
            .iter()
            .zip(&self.state)
            .filter_map(|(n, x)| n.strip_suffix("#i").map(|e| (e.to_string(), -x)))
            .collect()
    }

    /// Value of a probe alias, `v(node)`, `i(element)` or bare node name.
    pub fn value(&self, probe: &str) -> Option<f64> {
        let currents: Vec<f64> = self.elements.iter().map(|e| e.current).collect();
        self.names.lookup(probe, &self.voltages, &currents)
    }
}

pub(crate) struct Converged {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub kcl_ratio: f64,
}

pub(crate) enum Failure {
    Singular(usize),
    Diverged { residual: f64, trace: Vec<f64> },
}

/// Rounding noise allowance, in units of machine epsilon, on `sum |J_kj x_j|`.
const NOISE_ULPS: f64 = 64.0;

/// Ratio of the worst row residual to its tolerance. The tolerance of a
/// row never drops below the floating-point noise of evaluating it.
pub(crate) fn residual_ratio(layout: &Layout, sys: &System, x: &[f64], opts: &SimOptions) -> f64 {
    let n = x.len();
    (0..n)
        .map(|k| {
            let abstol = if layout.kinds[k] == Kind::Branch { opts.v_abstol } else { opts.i_abstol };
            let noise: f64 = (0..n).map(|j| (sys.jac.at(k, j) * x[j]).abs()).sum::<f64>() * NOISE_ULPS * f64::EPSILON;
            sys.res[k].abs() / (abstol + opts.reltol * sys.scale[k] + noise)
        })
        .fold(0.0, f64::max)
}

fn update_small(layout: &Layout, old: &[f64], new: &[f64], opts: &SimOptions) -> bool {
    (0..old.len()).all(|k| {
        let abstol = if layout.is_voltage(k) { opts.v_abstol } else { opts.i_abstol };
        (new[k] - old[k]).abs() <= abstol + opts.reltol * new[k].abs().max(old[k].abs())
    })
}

pub(crate) fn newton(
    circuit: &Circuit,
    layout: &Layout,
    x0: &[f64],
    e: &Eval,
    opts: &SimOptions,
) -> Result<Converged, Failure> {
    let n = layout.size();
    let mut x = x0.to_vec();
    let mut trace = Vec::new();
    let mut last_small = false;
    let mut residual = f64::INFINITY;
    for it in 0..=opts.max_iterations {
        let sys = assemble(circuit, layout, &x, e);
        let ratio = residual_ratio(layout, &sys, &x, opts);
        residual = sys.res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if !ratio.is_finite() {
            break;
        }
        if (ratio <= 1.0 && last_small) || (it == 1 && !layout.nonlinear) {
            return Ok(Converged { x, iterations: it, trace, kcl_ratio: ratio });
        }
        if it == opts.max_iterations {
            break;
        }
        let mut jac: Matrix<f64> = sys.jac;
        let mut dx: Vec<f64> = sys.res.iter().map(|r| -r).collect();
        solve(&mut jac, &mut dx).map_err(Failure::Singular)?;
        let node_step = dx[..layout.n_nodes].iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let alpha = if layout.nonlinear && node_step > opts.max_step { opts.max_step / node_step } else { 1.0 };
        let new: Vec<f64> = (0..n).map(|k| x[k] + alpha * dx[k]).collect();
        trace.push(dx.iter().fold(0.0f64, |m, d| m.max(alpha * d.abs())));
        last_small = alpha == 1.0 && update_small(layout, &x, &new, opts);
        x = new;
    }
    Err(Failure::Diverged { residual, trace })
}

/// Plain Newton, then gmin stepping, then source stepping.
pub(crate) fn solve_dc(
    circuit: &Circuit,
    layout: &Layout,
    x0: &[f64],
    base: &Eval,
    opts: &SimOptions,
) -> Result<(Converged, Strategy), EngineError> {
    match newton(circuit, layout, x0, base, opts) {
        Ok(c) => return Ok((c, Strategy::Newton)),
        Err(f @ Failure::Singular(_)) if !layout.nonlinear => return Err(failure(layout, f)),
        Err(_) => {}
    }

    let mut x = x0.to_vec();
    let mut ok = true;
    let mut g = 1e-2;
    while g >= 1e-12 * 0.5 {
        match newton(circuit, layout, &x, &Eval { gshunt: g, ..*base }, opts) {
            Ok(c) => x = c.x,
            Err(_) => {
                ok = false;
                break;
            }
        }
        g /= 10.0;
    }
    if ok {
        if let Ok(c) = newton(circuit, layout, &x, base, opts) {
            return Ok((c, Strategy::GminStepping));
        }
    }

    // Voltage sources first with current sources held at zero, then the
    // current sources.
    let unloaded = Eval { load_scale: 0.0, ..*base };
    let (start, strategy) = match ramp(circuit, layout, &vec![0.0; layout.size()], opts, |k| Eval {
        source_scale: k,
        ..unloaded
    }) {
        Ok(c) => (c, Strategy::SourceStepping),
        Err(_) => (
            pseudo_transient(circuit, layout, x0, &unloaded, opts).map_err(|f| failure(layout, f))?,
            Strategy::PseudoTransient,
        ),
    };
    let conv = ramp(circuit, layout, &start.x, opts, |k| Eval { load_scale: k, ..*base }).map_err(|f| failure(layout, f))?;
    Ok((conv, strategy))
}

const PSEUDO_G_START: f64 = 1e-2;
const PSEUDO_G_END: f64 = 1e-12;
const PSEUDO_MAX_STEPS: usize = 500;

fn pseudo_transient(
    circuit: &Circuit,
    layout: &Layout,
    x0: &[f64],
    base: &Eval,
    opts: &SimOptions,
) -> Result<Converged, Failure> {
    let mut x = x0.to_vec();
    let mut g = PSEUDO_G_START;
    let mut last = None;
    for _ in 0..PSEUDO_MAX_STEPS {
        if g < PSEUDO_G_END {
            return newton(circuit, layout, &x, base, opts);
        }
        match newton(circuit, layout, &x, &Eval { gshunt: g, anchor: Some(&x), ..*base }, opts) {
            Ok(c) => {
                if c.iterations <= 10 {
                    g *= 0.5;
                }
                x = c.x;
            }
            Err(f) => {
                g *= 4.0;
                last = Some(f);
            }
        }
    }
    Err(last.unwrap_or(Failure::Diverged { residual: f64::INFINITY, trace: Vec::new() }))
}

fn failure(layout: &Layout, f: Failure) -> EngineError {
    match f {
        Failure::Singular(k) => EngineError::Singular(layout.names[k].clone()),
        Failure::Diverged { residual, trace } => EngineError::NonConvergence { residual, trace },
    }
}

/// Continuation in a scale factor from 0 to 1 with adaptive increments.
fn ramp<'a>(
    circuit: &Circuit,
    layout: &Layout,
    x0: &[f64],
    opts: &SimOptions,
    eval: impl Fn(f64) -> Eval<'a>,
) -> Result<Converged, Failure> {
    let mut x = x0.to_vec();
    let mut scale = 0.0;
    let max_step = 1.0 / opts.source_steps as f64;
    let mut step = max_step;
    loop {
        let target = (scale + step).min(1.0);
        match newton(circuit, layout, &x, &eval(target), opts) {
            Ok(c) => {
                if target >= 1.0 {
                    return Ok(c);
                }
                x = c.x;
                scale = target;
                step = (step * 1.5).min(max_step);
            }
            Err(f) => {
                step *= 0.5;
                if step < max_step * 1e-4 {
                    return Err(f);
                }
            }
        }
    }
}

pub(crate) fn build_op(
    circuit: &Circuit,
    layout: &Layout,
    names: Arc<SignalNames>,
    conv: Converged,
    strategy: Strategy,
    e: &Eval,
) -> OpPoint {
    let x = conv.x;
    let currents = element_currents(circuit, layout, &x, e, &[]);
    let elements = circuit
        .elements()
        .iter()
        .zip(&layout.slots)
        .zip(&currents)
        .map(|((el, s), i)| {
            let mut op = ElementOp { name: el.name.clone(), current: *i, region: None, gm: None, gds: None };
            match &el.kind {
                ElementKind::Mosfet(p) => {
                    let t = &s.terms;
                    let m = mosfet_eval(p, at(&x, t[0]), at(&x, t[1]), at(&x, t[2]));
                    op.region = Some(m.region);
                    op.gm = Some(m.gm);
                    op.gds = Some(m.gds);
                }
                ElementKind::Vccs { gm } => op.gm = Some(*gm),
                _ => {}
            }
            op
        })
        .collect::<Vec<_>>();
    let supply_current = circuit
        .elements()
        .iter()
        .zip(&currents)
        .filter(|(el, _)| matches!(el.kind, ElementKind::VoltageSource { .. }))
        .map(|(_, i)| i)
        .sum();
    let latches = next_latches(circuit, layout, &x, e.latches);
    OpPoint {
        voltages: x[..layout.n_nodes].to_vec(),
        names,
        elements,
        supply_current,
        temperature: e.temperature,
        stats: SolveStats { strategy, iterations: conv.iterations, update_norms: conv.trace, kcl_ratio: conv.kcl_ratio },
        unknowns: layout.names.clone(),
        state: x,
        latches,
    }
}

pub(crate) fn dc_eval<'a>(circuit: &Circuit, latches: &'a [bool], opts: &SimOptions, time: f64) -> Eval<'a> {
    Eval {
        time,
        source_scale: 1.0,
        load_scale: 1.0,
        gshunt: 0.0,
        anchor: None,
        gmin: opts.gmin,
        temperature: circuit.temperature,
        latches,
        reactive: Reactive::Open,
    }
}

/// Operating point from an optional initial state and latch set.
pub(crate) fn operating_point_from(
    circuit: &Circuit,
    opts: &SimOptions,
    guess: Option<&OpPoint>,
    time: f64,
) -> Result<OpPoint, EngineError> {
    let layout = Layout::new(circuit);
    let names = Arc::new(SignalNames::new(circuit));
    let latches = match guess {
        Some(g) if g.latches.len() == circuit.elements().len() => g.latches.clone(),
        _ => vec![false; circuit.elements().len()],
    };
    let x0 = match guess {
        Some(g) => map_state(&layout, g, &[]),
        None => vec![0.0; layout.size()],
    };
    let e = dc_eval(circuit, &latches, opts, time);
    let (conv, strategy) = solve_dc(circuit, &layout, &x0, &e, opts)?;
    Ok(build_op(circuit, &layout, names, conv, strategy, &e))
}

/// State vector for `layout` taken from `op` by unknown name; `extra`
/// supplies values for unknowns `op` does not have (others start at 0).
pub(crate) fn map_state(layout: &Layout, op: &OpPoint, extra: &[(String, f64)]) -> Vec<f64> {
    layout
        .names
        .iter()
        .map(|n| {
            op.unknowns
                .iter()
                .position(|u| u == n)
                .map(|k| op.state[k])
                .or_else(|| extra.iter().find(|(m, _)| m == n).map(|(_, v)| *v))
                .unwrap_or(0.0)
        })
        .collect()
}
