use rayon::prelude::*;

use crate::engine::{log_grid, Simulator, StepPolicy, SweepSpec, SweepTarget, Table};
use crate::ldo::{LOAD, SUPPLY};
use crate::netlist::{Circuit, Waveform};

use super::{set_dc, table, vout, with_load, CharError, OUTPUT};

#[derive(Debug, Clone, PartialEq)]
pub struct TransientConfig {
    /// Load before the first edge and after the second.
    pub i1: f64,
    pub i2: f64,
    /// Rise and fall time of the load edges.
    pub edge: f64,
    /// Start of the first edge.
    pub t_first: f64,
    /// Time at `i2` between the edges.
    pub hold: f64,
    /// Time simulated after the second edge ends.
    pub settle: f64,
    pub policy: StepPolicy,
}

impl Default for TransientConfig {
    fn default() -> Self {
        Self {
            i1: 1e-3,
            i2: 0.1,
            edge: 1e-6,
            t_first: 20e-6,
            hold: 100e-6,
            settle: 130e-6,
            policy: StepPolicy::default(),
        }
    }
}

/// Response to one load edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeResponse {
    /// Output just before the edge.
    pub before: f64,
    /// Signed deviation of largest magnitude from `before`.
    pub peak: f64,
    /// Deviation when the load ramp ends.
    pub at_edge_end: f64,
    /// Time from the start of the edge until the output stays within 1% of
    /// `|peak|` of its value at the end of the window.
    pub recovery: f64,
}

#[derive(Debug, Clone)]
pub struct TransientDv {
    pub first: EdgeResponse,
    pub second: EdgeResponse,
    /// Largest `|peak|` of both edges.
    pub max_dv: f64,
    /// Largest fall below the pre-edge level, positive.
    pub undershoot: f64,
    /// Largest rise above the pre-edge level, positive.
    pub overshoot: f64,
    pub trace: Table,
}

impl TransientConfig {
    pub fn waveform(&self) -> Result<Waveform, CharError> {
        let t1 = self.t_first;
        let t2 = t1 + self.edge + self.hold;
        Waveform::pwl(vec![(0.0, self.i1), (t1, self.i1), (t1 + self.edge, self.i2), (t2, self.i2), (t2 + self.edge, self.i1)])
            .map_err(|e| CharError::Precondition(e.to_string()))
    }

    pub fn t_stop(&self) -> f64 {
        self.t_first + 2.0 * self.edge + self.hold + self.settle
    }
}

fn interpolate(t: &[f64], v: &[f64], at: f64) -> f64 {
    let k = t.partition_point(|x| *x < at);
    if k == 0 {
        return v[0];
    }
    if k == t.len() {
        return v[k - 1];
    }
    let w = (at - t[k - 1]) / (t[k] - t[k - 1]);
    v[k - 1] + w * (v[k] - v[k - 1])
}

fn edge_response(t: &[f64], v: &[f64], start: f64, edge: f64, end: f64) -> EdgeResponse {
    let before = interpolate(t, v, start);
    let at_edge_end = interpolate(t, v, start + edge) - before;
    let window: Vec<usize> = (0..t.len()).filter(|&k| t[k] >= start && t[k] <= end).collect();
    let peak = window.iter().map(|&k| v[k] - before).fold(0.0, |a: f64, d| if d.abs() > a.abs() { d } else { a });
    let last = window.last().map_or(before, |&k| v[k]);
    let band = 0.01 * peak.abs();
    let recovery = window.iter().rev().find(|&&k| (v[k] - last).abs() > band).map_or(0.0, |&k| t[k] - start);
    EdgeResponse { before, peak, at_edge_end, recovery }
}

/// Load stepped `i1 -> i2 -> i1` with ramps of `edge` seconds.
pub fn measure_transient_dv(sim: &Simulator, circuit: &Circuit, cfg: &TransientConfig) -> Result<TransientDv, CharError> {
    let mut c = circuit.clone();
    c.set_waveform(LOAD, cfg.waveform()?).map_err(|_| CharError::MissingElement(LOAD.into()))?;
    let tr = sim.transient(&c, cfg.t_stop(), &cfg.policy)?;
    let v = tr.signal(OUTPUT).ok_or_else(|| CharError::MissingElement("vout".into()))?;
    let i = tr.signal(&format!("i({LOAD})")).ok_or_else(|| CharError::MissingElement(LOAD.into()))?;
    let t2 = cfg.t_first + cfg.edge + cfg.hold;
    let first = edge_response(&tr.time, &v, cfg.t_first, cfg.edge, t2);
    let second = edge_response(&tr.time, &v, t2, cfg.edge, cfg.t_stop());
    let peaks = [first.peak, second.peak];
    Ok(TransientDv {
        first,
        second,
        max_dv: peaks.iter().fold(0.0, |a: f64, p| a.max(p.abs())),
        undershoot: peaks.iter().fold(0.0, |a: f64, p| a.max(-p)),
        overshoot: peaks.iter().fold(0.0, |a: f64, p| a.max(*p)),
        trace: table(&["time (s)", "v(vout) (V)", "i(ILOAD) (A)"], &[&tr.time, &v, &i]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsrrConfig {
    pub v_in: f64,
    pub load: f64,
    pub f_start: f64,
    pub f_stop: f64,
    pub points_per_decade: usize,
    /// Frequencies reported individually.
    pub spot: Vec<f64>,
}

impl Default for PsrrConfig {
    fn default() -> Self {
        Self {
            v_in: 2.6,
            load: 1e-3,
            f_start: 1.0,
            f_stop: 1e8,
            points_per_decade: 10,
            spot: vec![10.0, 1e3, 1e4, 1e5, 1e6],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Psrr {
    pub freqs: Vec<f64>,
    /// `-20 log10 |v_out / v_in|`.
    pub psrr_db: Vec<f64>,
    /// `(frequency, PSRR)` at each spot frequency.
    pub spot: Vec<(f64, f64)>,
    pub trace: Table,
}

impl Psrr {
    pub fn at(&self, freq: f64) -> Option<f64> {
        self.spot.iter().find(|(f, _)| *f == freq).map(|(_, p)| *p)
    }
}

pub fn measure_psrr(sim: &Simulator, circuit: &Circuit, cfg: &PsrrConfig) -> Result<Psrr, CharError> {
    let mut c = with_load(circuit, cfg.load)?;
    set_dc(&mut c, SUPPLY, cfg.v_in)?;
    let op = sim.dc_operating_point(&c)?;
    let rejection = |freqs: &[f64]| -> Result<Vec<f64>, CharError> {
        let ac = sim.ac_analysis(&c, &op, freqs, SUPPLY, &[OUTPUT])?;
        Ok(ac.psrr_db(OUTPUT).expect("requested output"))
    };
    let freqs = log_grid(cfg.f_start, cfg.f_stop, cfg.points_per_decade);
    let psrr_db = rejection(&freqs)?;
    let spot = if cfg.spot.is_empty() { Vec::new() } else { cfg.spot.iter().cloned().zip(rejection(&cfg.spot)?).collect() };
    let trace = table(&["frequency (Hz)", "psrr (dB)"], &[&freqs, &psrr_db]);
    Ok(Psrr { freqs, psrr_db, spot, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcGainConfig {
    pub load: f64,
    /// Supply override; `None` keeps the circuit's own.
    pub v_in: Option<f64>,
    pub f_start: f64,
    pub f_stop: f64,
    pub points_per_decade: usize,
}

impl Default for DcGainConfig {
    fn default() -> Self {
        Self { load: 100e-6, v_in: None, f_start: 1.0, f_stop: 1e9, points_per_decade: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct DcGain {
    pub dc_gain_db: f64,
    pub unity_gain_hz: f64,
    pub phase_margin_deg: f64,
    pub trace: Table,
}

/// Loop gain at the circuit's break point.
pub fn measure_dc_gain(sim: &Simulator, circuit: &Circuit, cfg: &DcGainConfig) -> Result<DcGain, CharError> {
    let mut c = with_load(circuit, cfg.load)?;
    if let Some(v) = cfg.v_in {
        set_dc(&mut c, SUPPLY, v)?;
    }
    let lg = sim.loop_gain(&c, &log_grid(cfg.f_start, cfg.f_stop, cfg.points_per_decade))?;
    Ok(DcGain {
        dc_gain_db: lg.dc_gain_db,
        unity_gain_hz: lg.unity_gain_hz,
        phase_margin_deg: lg.phase_margin_deg,
        trace: lg.response.table(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginCurveConfig {
    pub i_start: f64,
    pub i_stop: f64,
    pub points: usize,
    pub v_in: Option<f64>,
    pub f_start: f64,
    pub f_stop: f64,
    pub points_per_decade: usize,
}

impl Default for MarginCurveConfig {
    fn default() -> Self {
        Self { i_start: 100e-6, i_stop: 0.1, points: 20, v_in: None, f_start: 1.0, f_stop: 1e9, points_per_decade: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct MarginCurve {
    pub loads: Vec<f64>,
    pub margins: Vec<f64>,
    pub unity_gain_hz: Vec<f64>,
    pub dc_gain_db: Vec<f64>,
    pub min_margin: f64,
    /// Largest difference between adjacent grid points, degrees.
    pub max_step: f64,
    pub trace: Table,
}

/// Phase margin on a log grid of loads, continuing the operating point
/// from one load to the next.
pub fn measure_phase_margin_vs_load(
    sim: &Simulator,
    circuit: &Circuit,
    cfg: &MarginCurveConfig,
) -> Result<MarginCurve, CharError> {
    let mut c = circuit.clone();
    if let Some(v) = cfg.v_in {
        set_dc(&mut c, SUPPLY, v)?;
    }
    let spec = SweepSpec::log(SweepTarget::Source(LOAD.into()), cfg.i_start, cfg.i_stop, cfg.points);
    let sweep = sim.dc_sweep(&c, &spec)?;
    let freqs = log_grid(cfg.f_start, cfg.f_stop, cfg.points_per_decade);
    let gains = sweep
        .points
        .par_iter()
        .map(|p| {
            let op = p.op.as_ref().ok_or_else(|| CharError::PointFailed {
                label: sweep.label.clone(),
                value: p.value,
                error: p.error.clone().unwrap_or_default(),
            })?;
            vout(op)?;
            let mut at = c.clone();
            set_dc(&mut at, LOAD, p.value)?;
            Ok(sim.loop_gain_at(&at, op, &freqs)?)
        })
        .collect::<Result<Vec<_>, CharError>>()?;
    let loads = sweep.values();
    let margins: Vec<f64> = gains.iter().map(|g| g.phase_margin_deg).collect();
    let unity_gain_hz: Vec<f64> = gains.iter().map(|g| g.unity_gain_hz).collect();
    let dc_gain_db: Vec<f64> = gains.iter().map(|g| g.dc_gain_db).collect();
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_step = margins.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let trace = table(
        &["iload (A)", "phase margin (deg)", "unity gain (Hz)", "dc gain (dB)"],
        &[&loads, &margins, &unity_gain_hz, &dc_gain_db],
    );
    Ok(MarginCurve { loads, margins, unity_gain_hz, dc_gain_db, min_margin, max_step, trace })
}
