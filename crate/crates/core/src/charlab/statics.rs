use crate::devices::{limiter_conduction, limiter_current, ElementKind, LIMITER_ENGAGED_DRIVE};
use crate::engine::{OpPoint, Simulator, SweepSpec, SweepTarget, SweepTrace, Table};
use crate::ldo::{ENABLE, LIMITER, LOAD, SUPPLY};
use crate::netlist::{Circuit, Element};

use super::{require, set_dc, slope, span, table, vout, with_load, CharError};

const BISECTIONS: usize = 48;

/// Voltages of a sweep that must converge everywhere.
fn converged(trace: &SweepTrace) -> Result<Vec<OpPoint>, CharError> {
    trace
        .points
        .iter()
        .map(|p| {
            p.op.clone().ok_or_else(|| CharError::PointFailed {
                label: trace.label.clone(),
                value: p.value,
                error: p.error.clone().unwrap_or_default(),
            })
        })
        .collect()
}

fn outputs(ops: &[OpPoint]) -> Result<Vec<f64>, CharError> {
    ops.iter().map(vout).collect()
}

/// Bisect `set(c, x)` between `hi` (inside the band, solved as `op_hi`) and
/// `lo` (outside) for the last value where `vout >= level`.
fn bisect_edge(
    sim: &Simulator,
    circuit: &Circuit,
    set: impl Fn(&mut Circuit, f64) -> Result<(), CharError>,
    (mut hi, mut op_hi): (f64, OpPoint),
    mut lo: f64,
    level: f64,
    log: bool,
) -> Result<(f64, OpPoint), CharError> {
    let mut work = circuit.clone();
    for _ in 0..BISECTIONS {
        let mid = if log { (hi * lo).sqrt() } else { 0.5 * (hi + lo) };
        set(&mut work, mid)?;
        match sim.dc_operating_point_from(&work, &op_hi) {
            Ok(op) if vout(&op)? >= level => {
                hi = mid;
                op_hi = op;
            }
            _ => lo = mid,
        }
    }
    Ok((hi, op_hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutConfig {
    pub v_start: f64,
    pub v_stop: f64,
    pub points: usize,
    pub load: f64,
    /// Fractional fall below nominal that counts as loss of regulation.
    pub threshold: f64,
    /// Supply at which the minimum-input dropout is read.
    pub v_in_min: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self { v_start: 5.5, v_stop: 1.8, points: 38, load: 0.1, threshold: 0.02, v_in_min: 2.6 }
    }
}

#[derive(Debug, Clone)]
pub struct Dropout {
    /// `v_in - v_out` at the regulation edge.
    pub dropout: f64,
    pub v_in_edge: f64,
    pub v_out_edge: f64,
    /// Output at the top of the sweep.
    pub nominal: f64,
    /// `v_in_min - v_out(v_in_min)`.
    pub at_v_in_min: f64,
    pub trace: Table,
}

/// Supply swept downward at constant load; the edge is the lowest supply
/// that keeps the output within `threshold` of its value at `v_start`.
pub fn measure_dropout(sim: &Simulator, circuit: &Circuit, cfg: &DropoutConfig) -> Result<Dropout, CharError> {
    let c = with_load(circuit, cfg.load)?;
    let spec = SweepSpec::linear(SweepTarget::Source(SUPPLY.into()), cfg.v_start, cfg.v_stop, cfg.points);
    let sweep = sim.dc_sweep(&c, &spec)?;
    let first = sweep.points[0].op.clone().ok_or_else(|| CharError::PointFailed {
        label: sweep.label.clone(),
        value: cfg.v_start,
        error: sweep.points[0].error.clone().unwrap_or_default(),
    })?;
    let nominal = vout(&first)?;
    let level = (1.0 - cfg.threshold) * nominal;
    let inside = |p: &crate::engine::SweepPoint| p.op.as_ref().and_then(|op| vout(op).ok()).is_some_and(|v| v >= level);
    let k = sweep
        .points
        .iter()
        .position(|p| !inside(p))
        .ok_or(CharError::NoRegulationEdge { from: cfg.v_start, to: cfg.v_stop })?;
    if k == 0 {
        return Err(CharError::NoRegulationEdge { from: cfg.v_start, to: cfg.v_stop });
    }
    let hi = &sweep.points[k - 1];
    let set = |c: &mut Circuit, v: f64| set_dc(c, SUPPLY, v);
    let (v_in_edge, op) =
        bisect_edge(sim, &c, set, (hi.value, hi.op.clone().unwrap()), sweep.points[k].value, level, false)?;
    let v_out_edge = vout(&op)?;

    let mut at_min = c.clone();
    set_dc(&mut at_min, SUPPLY, cfg.v_in_min)?;
    let at_v_in_min = cfg.v_in_min - vout(&sim.dc_operating_point(&at_min)?)?;

    Ok(Dropout {
        dropout: v_in_edge - v_out_edge,
        v_in_edge,
        v_out_edge,
        nominal,
        at_v_in_min,
        trace: sweep.table(&["v(vout)"]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineConfig {
    pub v_start: f64,
    pub v_stop: f64,
    pub points: usize,
    pub load: f64,
}

impl Default for LineConfig {
    fn default() -> Self {
        Self { v_start: 2.6, v_stop: 5.5, points: 30, load: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct LineRegulation {
    /// Max minus min of the output over the sweep.
    pub delta_v: f64,
    /// Least-squares `dv_out / dv_in`.
    pub slope: f64,
    pub trace: Table,
}

pub fn measure_line_regulation(
    sim: &Simulator,
    circuit: &Circuit,
    cfg: &LineConfig,
) -> Result<LineRegulation, CharError> {
    let c = with_load(circuit, cfg.load)?;
    let spec = SweepSpec::linear(SweepTarget::Source(SUPPLY.into()), cfg.v_start, cfg.v_stop, cfg.points);
    let sweep = sim.dc_sweep(&c, &spec)?;
    let v = outputs(&converged(&sweep)?)?;
    Ok(LineRegulation { delta_v: span(&v), slope: slope(&sweep.values(), &v), trace: sweep.table(&["v(vout)"]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadConfig {
    pub v_in: f64,
    pub i_start: f64,
    pub i_stop: f64,
    pub points: usize,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self { v_in: 2.6, i_start: 0.0, i_stop: 0.1, points: 21 }
    }
}

#[derive(Debug, Clone)]
pub struct LoadRegulation {
    pub delta_v: f64,
    /// Output resistance, the negated least-squares slope, Ω.
    pub r_ldo: f64,
    pub trace: Table,
}

pub fn measure_load_regulation(
    sim: &Simulator,
    circuit: &Circuit,
    cfg: &LoadConfig,
) -> Result<LoadRegulation, CharError> {
    let mut c = circuit.clone();
    set_dc(&mut c, SUPPLY, cfg.v_in)?;
    require(&c, LOAD)?;
    let spec = SweepSpec::linear(SweepTarget::Source(LOAD.into()), cfg.i_start, cfg.i_stop, cfg.points);
    let sweep = sim.dc_sweep(&c, &spec)?;
    let v = outputs(&converged(&sweep)?)?;
    Ok(LoadRegulation { delta_v: span(&v), r_ldo: -slope(&sweep.values(), &v), trace: sweep.table(&["v(vout)"]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TempConfig {
    pub t_start: f64,
    pub t_stop: f64,
    pub points: usize,
    /// Supply and load override; `None` keeps the circuit's own.
    pub v_in: Option<f64>,
    pub load: Option<f64>,
}

impl Default for TempConfig {
    fn default() -> Self {
        Self { t_start: -40.0, t_stop: 125.0, points: 34, v_in: None, load: None }
    }
}

#[derive(Debug, Clone)]
pub struct TempDependence {
    pub delta_v: f64,
    /// Box-method coefficient `delta_v / (mean v_out * span)`, ppm/°C.
    pub tc_ppm: f64,
    pub trace: Table,
}

pub fn measure_temp_dependence(
    sim: &Simulator,
    circuit: &Circuit,
    cfg: &TempConfig,
) -> Result<TempDependence, CharError> {
    let mut c = circuit.clone();
    if let Some(v) = cfg.v_in {
        set_dc(&mut c, SUPPLY, v)?;
    }
    if let Some(i) = cfg.load {
        set_dc(&mut c, LOAD, i)?;
    }
    let spec = SweepSpec::linear(SweepTarget::Temperature, cfg.t_start, cfg.t_stop, cfg.points);
    let sweep = sim.dc_sweep(&c, &spec)?;
    let v = outputs(&converged(&sweep)?)?;
    let delta_v = span(&v);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let tc_ppm = delta_v / (mean * (cfg.t_stop - cfg.t_start).abs()) * 1e6;
    Ok(TempDependence { delta_v, tc_ppm, trace: sweep.table(&["v(vout)"]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuiescentConfig {
    /// Supply for the enabled and disabled readings.
    pub v_in_on: f64,
    /// Supply below the power-on-reset threshold.
    pub v_in_below_por: f64,
}

impl Default for QuiescentConfig {
    fn default() -> Self {
        Self { v_in_on: 5.5, v_in_below_por: 2.0 }
    }
}

/// Supply current at zero load in each mode.
#[derive(Debug, Clone)]
pub struct Quiescent {
    pub enabled: f64,
    pub below_por: f64,
    pub disabled: f64,
    pub vout_below_por: f64,
    pub vout_disabled: f64,
    /// Rows: enabled, below POR, disabled.
    pub trace: Table,
}

pub fn measure_quiescent(sim: &Simulator, circuit: &Circuit, cfg: &QuiescentConfig) -> Result<Quiescent, CharError> {
    let base = with_load(circuit, 0.0)?;
    let supply = format!("i({SUPPLY})");
    let run = |v_in: f64, enable: Option<f64>| -> Result<(f64, f64), CharError> {
        let mut c = base.clone();
        set_dc(&mut c, SUPPLY, v_in)?;
        if let Some(e) = enable {
            set_dc(&mut c, ENABLE, e)?;
        }
        let op = sim.dc_operating_point(&c)?;
        let i = op.value(&supply).ok_or_else(|| CharError::MissingElement(SUPPLY.into()))?;
        Ok((i, vout(&op)?))
    };
    let (enabled, vout_on) = run(cfg.v_in_on, None)?;
    let (below_por, vout_below_por) = run(cfg.v_in_below_por, None)?;
    let (disabled, vout_disabled) = run(cfg.v_in_on, Some(0.0))?;
    let trace = table(
        &["mode", "vin (V)", "i(VIN) (A)", "v(vout) (V)"],
        &[
            &[0.0, 1.0, 2.0],
            &[cfg.v_in_on, cfg.v_in_below_por, cfg.v_in_on],
            &[enabled, below_por, disabled],
            &[vout_on, vout_below_por, vout_disabled],
        ],
    );
    Ok(Quiescent { enabled, below_por, disabled, vout_below_por, vout_disabled, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentLimitConfig {
    pub v_in: f64,
    /// Load resistance sweep, log spaced from `r_start` down to `r_stop`.
    pub r_start: f64,
    pub r_stop: f64,
    pub points: usize,
    /// Fractional output fall that marks the end of regulation.
    pub threshold: f64,
}

impl Default for CurrentLimitConfig {
    fn default() -> Self {
        Self { v_in: 2.6, r_start: 1e3, r_stop: 1e-3, points: 61, threshold: 0.02 }
    }
}

#[derive(Debug, Clone)]
pub struct CurrentLimit {
    /// Delivered current where the output has fallen `threshold` below its
    /// light-load value.
    pub i_at_nominal: f64,
    pub v_at_nominal: f64,
    /// Current into a 0 V source on the output.
    pub i_short: f64,
    /// Locus points where the limiter drive is at least
    /// [`LIMITER_ENGAGED_DRIVE`].
    pub engaged_points: usize,
    /// Largest `|i - limiter_current(v_out)| / limiter_current(v_out)` over
    /// the engaged points.
    pub max_law_error: f64,
    /// Output falls with the load resistance, and the engaged current falls
    /// with the output.
    pub monotone: bool,
    /// Columns: resistance, v_out, current, engaged (0/1).
    pub trace: Table,
}

/// Name of the resistive load added for the limit sweep.
pub const LIMIT_LOAD: &str = "RLOAD";
/// Name of the 0 V source used for the short-circuit reading.
pub const SHORT: &str = "VSHORT";

pub fn measure_current_limit(
    sim: &Simulator,
    circuit: &Circuit,
    cfg: &CurrentLimitConfig,
) -> Result<CurrentLimit, CharError> {
    let lim = circuit.element(LIMITER).ok_or_else(|| CharError::MissingElement(LIMITER.into()))?;
    let ElementKind::CurrentLimiter(law) = lim.kind else {
        return Err(CharError::Precondition(format!("`{LIMITER}` is not a current limiter")));
    };
    let lim_nodes = lim.nodes.clone();
    let out = lim_nodes[1].clone();

    let mut base = with_load(circuit, 0.0)?;
    set_dc(&mut base, SUPPLY, cfg.v_in)?;
    let mut c = base.clone();
    let load = crate::devices::ElementKind::resistor(cfg.r_start).map_err(|e| CharError::Precondition(e.to_string()))?;
    c.add(Element::new(LIMIT_LOAD, &[&out, "0"], load)).map_err(|e| CharError::Precondition(e.to_string()))?;

    let spec = SweepSpec::log(SweepTarget::Parameter(LIMIT_LOAD.into()), cfg.r_start, cfg.r_stop, cfg.points);
    let sweep = sim.dc_sweep(&c, &spec)?;
    let ops = converged(&sweep)?;
    let r = sweep.values();
    let v = outputs(&ops)?;
    let i: Vec<f64> = v.iter().zip(&r).map(|(v, r)| v / r).collect();

    let mut engaged = vec![0.0; ops.len()];
    let mut max_law_error: f64 = 0.0;
    for (k, op) in ops.iter().enumerate() {
        let volt = |n: &str| op.voltage(n).unwrap_or(0.0);
        let cond = limiter_conduction(&law, volt(&lim_nodes[0]) - volt(&lim_nodes[1]), volt(&lim_nodes[2]));
        if cond.drive >= LIMITER_ENGAGED_DRIVE {
            engaged[k] = 1.0;
            let expect = limiter_current(&law, v[k]);
            max_law_error = max_law_error.max((i[k] - expect).abs() / expect);
        }
    }
    let engaged_points = engaged.iter().filter(|e| **e > 0.0).count();
    let monotone = v.windows(2).all(|w| w[1] <= w[0])
        && (1..v.len()).filter(|&k| engaged[k] > 0.0 && engaged[k - 1] > 0.0).all(|k| i[k] <= i[k - 1]);

    let level = (1.0 - cfg.threshold) * v[0];
    let k = v.iter().position(|x| *x < level).ok_or_else(|| {
        CharError::Precondition(format!("output stays above {level} V down to {} Ω", cfg.r_stop))
    })?;
    if k == 0 {
        return Err(CharError::Precondition("output already out of regulation at the first point".into()));
    }
    let set = |c: &mut Circuit, x: f64| {
        crate::engine::apply_target(c, &SweepTarget::Parameter(LIMIT_LOAD.into()), x).map_err(CharError::from)
    };
    let (r_nom, op_nom) = bisect_edge(sim, &c, set, (r[k - 1], ops[k - 1].clone()), r[k], level, true)?;
    let v_at_nominal = vout(&op_nom)?;

    let mut shorted = base;
    let src = ElementKind::VoltageSource { waveform: crate::netlist::Waveform::Dc(0.0), tc: 0.0 };
    shorted.add(Element::new(SHORT, &[&out, "0"], src)).map_err(|e| CharError::Precondition(e.to_string()))?;
    let op = sim.dc_operating_point(&shorted)?;
    let i_short = -op.current(SHORT).ok_or_else(|| CharError::MissingElement(SHORT.into()))?;

    Ok(CurrentLimit {
        i_at_nominal: v_at_nominal / r_nom,
        v_at_nominal,
        i_short,
        engaged_points,
        max_law_error,
        monotone,
        trace: table(&["rload (Ω)", "v(vout) (V)", "i(RLOAD) (A)", "engaged"], &[&r, &v, &i, &engaged]),
    })
}
