use std::sync::Arc;

use crate::devices::ElementKind;
use crate::netlist::Circuit;

use super::dc::{dc_eval, newton, operating_point_from, Failure};
use super::mna::{cap_currents, cap_rest, element_currents, next_latches, CapHistory, Eval, Layout, Reactive};
use super::{EngineError, SignalNames, SimOptions, Table};

/// Local-truncation-error step control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveStep {
    pub lte_reltol: f64,
    pub lte_abstol: f64,
    /// Defaults to `t_stop / 50`.
    pub dt_max: Option<f64>,
    /// Defaults to `t_stop * 1e-12`.
    pub dt_min: Option<f64>,
    /// First step and first step after each breakpoint; defaults to
    /// `t_stop * 1e-5`.
    pub dt_initial: Option<f64>,
}

impl Default for AdaptiveStep {
    fn default() -> Self {
        Self { lte_reltol: 1e-4, lte_abstol: 1e-6, dt_max: None, dt_min: None, dt_initial: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    Adaptive(AdaptiveStep),
    /// Constant step; breakpoints still shorten the step that would cross
    /// them.
    Fixed(f64),
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Adaptive(AdaptiveStep::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TranStats {
    pub steps: usize,
    pub newton_iterations: usize,
    pub rejected_steps: usize,
    /// Worst residual-to-tolerance ratio over all accepted steps.
    pub max_kcl_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct TransientTrace {
    names: Arc<SignalNames>,
    pub time: Vec<f64>,
    voltages: Vec<Vec<f64>>,
    currents: Vec<Vec<f64>>,
    pub stats: TranStats,
}

impl TransientTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// A probe alias, `v(node)`, `i(element)` or bare node name over time.
    pub fn signal(&self, probe: &str) -> Option<Vec<f64>> {
        (0..self.time.len())
            .map(|i| self.names.lookup(probe, &self.voltages[i], &self.currents[i]))
            .collect()
    }

    pub fn table(&self, probes: &[&str]) -> Option<Table> {
        let mut headers = vec!["time (s)".to_string()];
        headers.extend(probes.iter().map(|p| super::probe_header(p)));
        let cols = probes.iter().map(|p| self.signal(p)).collect::<Option<Vec<_>>>()?;
        let rows = (0..self.time.len())
            .map(|i| std::iter::once(self.time[i]).chain(cols.iter().map(|c| c[i])).collect())
            .collect();
        Some(Table { headers, rows })
    }
}

fn breakpoints(circuit: &Circuit, t_stop: f64) -> Vec<f64> {
    let mut bps: Vec<f64> = circuit
        .elements()
        .iter()
        .flat_map(|e| match &e.kind {
            ElementKind::VoltageSource { waveform, .. } | ElementKind::CurrentSource { waveform } => {
                waveform.breakpoints()
            }
            _ => Vec::new(),
        })
        .filter(|t| *t > 0.0 && *t < t_stop)
        .collect();
    bps.push(t_stop);
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_stop);
    bps
}

/// Divided difference of order `pts.len() - 1` for unknown `k`.
fn divided_difference(pts: &[(f64, &[f64])], k: usize) -> f64 {
    let mut d: Vec<f64> = pts.iter().map(|(_, x)| x[k]).collect();
    for order in 1..pts.len() {
        for i in 0..pts.len() - order {
            d[i] = (d[i + 1] - d[i]) / (pts[i + order].0 - pts[i].0);
        }
    }
    d[0]
}

/// Worst LTE-to-tolerance ratio and the order used for the estimate.
fn lte_ratio(
    layout: &Layout,
    hist: &[(f64, Vec<f64>)],
    t_new: f64,
    x_new: &[f64],
    trapezoidal: bool,
    a: &AdaptiveStep,
) -> Option<(f64, i32)> {
    let order: i32 = if trapezoidal && hist.len() >= 3 {
        2
    } else if hist.len() >= 2 {
        1
    } else {
        return None;
    };
    let take = order as usize + 1;
    let mut pts: Vec<(f64, &[f64])> = hist[hist.len() - take..].iter().map(|(t, x)| (*t, x.as_slice())).collect();
    pts.push((t_new, x_new));
    let h = t_new - hist[hist.len() - 1].0;
    let x_old = &hist[hist.len() - 1].1;
    let mut worst = 0.0f64;
    for k in (0..layout.size()).filter(|k| layout.is_voltage(*k)) {
        let dd = divided_difference(&pts, k).abs();
        let lte = if order == 2 { 0.5 * h.powi(3) * dd } else { h * h * dd };
        let tol = a.lte_reltol * x_new[k].abs().max(x_old[k].abs()) + a.lte_abstol;
        worst = worst.max(lte / tol);
    }
    Some((worst, order))
}

pub(crate) fn transient(
    circuit: &Circuit,
    t_stop: f64,
    policy: &StepPolicy,
    opts: &SimOptions,
) -> Result<TransientTrace, EngineError> {
    if !(t_stop > 0.0 && t_stop.is_finite()) {
        return Err(EngineError::Parameter(format!("t_stop must be positive, got {t_stop}")));
    }
    let (dt_min, dt_max, dt_initial) = match policy {
        StepPolicy::Fixed(dt) => {
            if !(*dt > 0.0) {
                return Err(EngineError::Parameter(format!("fixed step must be positive, got {dt}")));
            }
            (dt * 1e-6, *dt, *dt)
        }
        StepPolicy::Adaptive(a) => (
            a.dt_min.unwrap_or(t_stop * 1e-12),
            a.dt_max.unwrap_or(t_stop / 50.0),
            a.dt_initial.unwrap_or(t_stop * 1e-5),
        ),
    };
    let layout = Layout::new(circuit);
    let names = Arc::new(SignalNames::new(circuit));
    let op = operating_point_from(circuit, opts, None, 0.0)?;
    let mut x = op.state.clone();
    let mut latches = op.latches.clone();
    let mut caps: Vec<CapHistory> = cap_rest(&layout, &x);

    let mut trace = TransientTrace {
        names,
        time: vec![0.0],
        voltages: vec![op.voltages.clone()],
        currents: vec![op.elements.iter().map(|e| e.current).collect()],
        stats: TranStats::default(),
    };
    let bps = breakpoints(circuit, t_stop);
    let mut bp_i = 0;
    let mut t = 0.0;
    let mut h = dt_initial.min(dt_max);
    let mut after_break = true;
    let mut hist: Vec<(f64, Vec<f64>)> = vec![(0.0, x.clone())];

    while bp_i < bps.len() {
        let next_bp = bps[bp_i];
        let gap = next_bp - t;
        let mut hh = h.min(gap);
        if gap - hh <= 1e-9 * hh {
            hh = gap;
        } else if matches!(policy, StepPolicy::Adaptive(_)) && gap < 1.5 * hh {
            hh = 0.5 * gap;
        }
        let hits = hh >= gap;
        let (a0, b) = if after_break { (1.0 / hh, 0.0) } else { (2.0 / hh, 1.0) };
        let t_new = if hits { next_bp } else { t + hh };
        let e = Eval {
            time: t_new,
            reactive: Reactive::Companion { a0, b, hist: &caps },
            ..dc_eval(circuit, &latches, opts, t_new)
        };
        let conv = match newton(circuit, &layout, &x, &e, opts) {
            Ok(c) => c,
            Err(f) => {
                trace.stats.rejected_steps += 1;
                h = 0.5 * hh;
                if h < dt_min {
                    let reason = match f {
                        Failure::Singular(k) => format!("singular matrix at `{}`", layout.names[k]),
                        Failure::Diverged { residual, .. } => format!("Newton failed, residual {residual:e}"),
                    };
                    return Err(EngineError::TimestepTooSmall { time: t, dt: hh, reason });
                }
                continue;
            }
        };
        trace.stats.newton_iterations += conv.iterations;
        let mut h_next = hh;
        if let StepPolicy::Adaptive(a) = policy {
            if let Some((r, order)) = lte_ratio(&layout, &hist, t_new, &conv.x, !after_break, a) {
                let factor = 0.9 * r.max(1e-12).powf(-1.0 / (order + 1) as f64);
                if r > 1.0 {
                    trace.stats.rejected_steps += 1;
                    h = hh * factor.clamp(0.25, 0.9);
                    if h < dt_min {
                        return Err(EngineError::TimestepTooSmall {
                            time: t,
                            dt: hh,
                            reason: format!("local truncation error {r:.3e} x tolerance"),
                        });
                    }
                    continue;
                }
                h_next = hh * factor.clamp(0.25, 2.0);
            } else {
                h_next = hh * 2.0;
            }
        }
        let new_caps = cap_currents(&layout, &conv.x, a0, b, &caps);
        let cap_i: Vec<f64> = new_caps.iter().map(|c| c.i).collect();
        let currents = element_currents(circuit, &layout, &conv.x, &e, &cap_i);
        latches = next_latches(circuit, &layout, &conv.x, &latches);
        caps = new_caps;
        x = conv.x;
        t = t_new;
        trace.stats.steps += 1;
        trace.stats.max_kcl_ratio = trace.stats.max_kcl_ratio.max(conv.kcl_ratio);
        trace.time.push(t);
        trace.voltages.push(x[..layout.n_nodes].to_vec());
        trace.currents.push(currents);
        h = match policy {
            StepPolicy::Fixed(dt) => *dt,
            StepPolicy::Adaptive(_) => h_next.min(dt_max),
        };
        if hits {
            bp_i += 1;
            after_break = true;
            hist.clear();
            if let StepPolicy::Adaptive(_) = policy {
                h = h.min(dt_initial);
            }
        } else {
            after_break = false;
        }
        hist.push((t, x.clone()));
        if hist.len() > 4 {
            hist.remove(0);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divided_difference_of_cubic() {
        let f = |t: f64| 2.0 * t * t * t - t + 1.0;
        let xs: Vec<Vec<f64>> = [0.0, 0.3, 0.7, 1.5].iter().map(|t| vec![f(*t)]).collect();
        let pts: Vec<(f64, &[f64])> =
            [0.0, 0.3, 0.7, 1.5].iter().zip(&xs).map(|(t, x)| (*t, x.as_slice())).collect();
        assert!((divided_difference(&pts, 0) - 2.0).abs() < 1e-12);
    }
}
