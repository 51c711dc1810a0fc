use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::engine::{SimOptions, Simulator, Table};
use crate::netlist::{format_value, serialize, Circuit};

use super::dynamic::{
    measure_dc_gain, measure_phase_margin_vs_load, measure_psrr, measure_transient_dv, DcGainConfig,
    MarginCurveConfig, PsrrConfig, TransientConfig,
};
use super::statics::{
    measure_current_limit, measure_dropout, measure_line_regulation, measure_load_regulation, measure_quiescent,
    measure_temp_dependence, CurrentLimitConfig, DropoutConfig, LineConfig, LoadConfig, QuiescentConfig, TempConfig,
};
use super::targets::{Conditions, SpecId, SpecTarget};
use super::CharError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    NotRun,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotRun => "NOT-RUN",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpecResult {
    pub target: SpecTarget,
    /// Measured value in base units; `None` when the measurement failed.
    pub measured: Option<f64>,
    pub verdict: Verdict,
    pub diagnostic: Option<String>,
    /// Raw trace behind the measured value.
    pub trace: Option<Table>,
}

impl SpecResult {
    pub fn id(&self) -> SpecId {
        self.target.id
    }

    /// File name the trace is written under.
    pub fn trace_name(&self) -> Option<String> {
        self.trace.as_ref().map(|_| format!("{}.csv", self.target.id))
    }
}

#[derive(Debug, Clone)]
pub struct ComplianceReport {
    /// In spec-id order.
    pub results: Vec<SpecResult>,
    /// Netlist of the circuit under test.
    pub circuit: String,
    pub options: SimOptions,
    pub timestamp: SystemTime,
}

impl ComplianceReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.verdict == Verdict::Pass)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["spec_id", "target", "unit", "measured", "verdict", "conditions", "trace", "diagnostic"])
            .expect("in-memory write");
        for r in &self.results {
            let t = &r.target;
            w.write_record([
                t.id.as_str(),
                &t.describe(),
                &t.unit,
                &r.measured.map(|m| format_value(m / t.scale)).unwrap_or_default(),
                r.verdict.as_str(),
                &t.conditions.text,
                &r.trace_name().unwrap_or_default(),
                r.diagnostic.as_deref().unwrap_or(""),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Aligned plain-text table with a header block.
    pub fn to_table(&self) -> String {
        let secs = self.timestamp.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let o = &self.options;
        let mut out = String::new();
        let _ = writeln!(out, "compliance report (unix time {secs})");
        let _ = writeln!(
            out,
            "reltol {} v_abstol {} V i_abstol {} A gmin {} S",
            format_value(o.reltol),
            format_value(o.v_abstol),
            format_value(o.i_abstol),
            format_value(o.gmin)
        );
        let rows: Vec<[String; 5]> = self
            .results
            .iter()
            .map(|r| {
                let t = &r.target;
                [
                    t.id.to_string(),
                    t.describe(),
                    r.measured.map_or_else(|| "-".into(), |m| format!("{:.4} {}", m / t.scale, t.unit)),
                    r.verdict.as_str().to_string(),
                    r.diagnostic.clone().unwrap_or_else(|| t.conditions.text.clone()),
                ]
            })
            .collect();
        let head = ["spec", "target", "measured", "verdict", "conditions"];
        let mut width = head.map(str::len);
        for row in &rows {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: [&str; 5]| {
            let mut s: String =
                cells.iter().zip(width).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ");
            s.truncate(s.trim_end().len());
            s
        };
        let _ = writeln!(out, "{}", line(head));
        let _ = writeln!(out, "{}", line(width.map(|w| "-".repeat(w)).each_ref().map(String::as_str)));
        for row in &rows {
            let _ = writeln!(out, "{}", line(row.each_ref().map(String::as_str)));
        }
        out
    }
}

/// Measure one spec under the given conditions, reporting in `base_unit`
/// (one of [`SpecId::units`]). Returns the value and its trace.
pub fn measure_spec(
    sim: &Simulator,
    circuit: &Circuit,
    id: SpecId,
    c: &Conditions,
    base_unit: &str,
) -> Result<(f64, Table), CharError> {
    let single = |r: Option<super::targets::Range>| r.map(|r| r.lo);
    Ok(match id {
        SpecId::Dropout => {
            let mut cfg = DropoutConfig::default();
            if let Some(r) = c.vin {
                (cfg.v_start, cfg.v_stop) = (r.hi.max(r.lo), r.lo.min(r.hi));
            }
            cfg.load = single(c.load).unwrap_or(cfg.load);
            let m = measure_dropout(sim, circuit, &cfg)?;
            (m.dropout, m.trace)
        }
        SpecId::LineReg => {
            let mut cfg = LineConfig::default();
            if let Some(r) = c.vin {
                (cfg.v_start, cfg.v_stop) = (r.lo, r.hi);
            }
            cfg.load = single(c.load).unwrap_or(cfg.load);
            let m = measure_line_regulation(sim, circuit, &cfg)?;
            (m.delta_v, m.trace)
        }
        SpecId::LoadReg => {
            let mut cfg = LoadConfig::default();
            if let Some(r) = c.load {
                (cfg.i_start, cfg.i_stop) = (r.lo, r.hi);
            }
            cfg.v_in = single(c.vin).unwrap_or(cfg.v_in);
            let m = measure_load_regulation(sim, circuit, &cfg)?;
            (m.delta_v, m.trace)
        }
        SpecId::TempDep => {
            let mut cfg = TempConfig::default();
            if let Some(r) = c.temp {
                (cfg.t_start, cfg.t_stop) = (r.lo, r.hi);
            }
            cfg.v_in = single(c.vin);
            cfg.load = single(c.load);
            let m = measure_temp_dependence(sim, circuit, &cfg)?;
            (if base_unit == "ppm/C" { m.tc_ppm } else { m.delta_v }, m.trace)
        }
        SpecId::TransientDv => {
            let mut cfg = TransientConfig::default();
            if let Some(r) = c.load {
                (cfg.i1, cfg.i2) = (r.lo, r.hi);
            }
            cfg.edge = c.at.unwrap_or(cfg.edge);
            let m = measure_transient_dv(sim, circuit, &cfg)?;
            (m.max_dv, m.trace)
        }
        SpecId::Iq => {
            let mut cfg = QuiescentConfig::default();
            cfg.v_in_on = single(c.vin).unwrap_or(cfg.v_in_on);
            let m = measure_quiescent(sim, circuit, &cfg)?;
            (m.enabled, m.trace)
        }
        SpecId::Psrr => {
            let mut cfg = PsrrConfig::default();
            cfg.v_in = single(c.vin).unwrap_or(cfg.v_in);
            cfg.load = single(c.load).unwrap_or(cfg.load);
            let freq = c.freq.unwrap_or(cfg.spot[0]);
            cfg.spot = vec![freq];
            let m = measure_psrr(sim, circuit, &cfg)?;
            (m.at(freq).expect("spot frequency"), m.trace)
        }
        SpecId::DcGain => {
            let mut cfg = DcGainConfig::default();
            cfg.v_in = single(c.vin);
            cfg.load = single(c.load).unwrap_or(cfg.load);
            let m = measure_dc_gain(sim, circuit, &cfg)?;
            (m.dc_gain_db, m.trace)
        }
        SpecId::Ilimit => {
            let mut cfg = CurrentLimitConfig::default();
            cfg.v_in = single(c.vin).unwrap_or(cfg.v_in);
            let m = measure_current_limit(sim, circuit, &cfg)?;
            (m.i_at_nominal, m.trace)
        }
        SpecId::PhaseMargin => {
            let mut cfg = MarginCurveConfig::default();
            if let Some(r) = c.load {
                (cfg.i_start, cfg.i_stop) = (r.lo, r.hi);
            }
            cfg.v_in = single(c.vin);
            cfg.points = c.points.unwrap_or(cfg.points);
            let m = measure_phase_margin_vs_load(sim, circuit, &cfg)?;
            (m.min_margin, m.trace)
        }
    })
}

/// Measure every target and compare. A failed measurement yields a
/// [`Verdict::NotRun`] row with the error as diagnostic.
pub fn run_compliance(sim: &Simulator, circuit: &Circuit, targets: &[SpecTarget]) -> ComplianceReport {
    let mut results: Vec<SpecResult> = targets
        .par_iter()
        .map(|t| match measure_spec(sim, circuit, t.id, &t.conditions, t.base_unit()) {
            Ok((measured, trace)) => SpecResult {
                target: t.clone(),
                measured: Some(measured),
                verdict: if t.comparator.holds(measured, t.value) { Verdict::Pass } else { Verdict::Fail },
                diagnostic: None,
                trace: Some(trace),
            },
            Err(e) => SpecResult {
                target: t.clone(),
                measured: None,
                verdict: Verdict::NotRun,
                diagnostic: Some(e.to_string()),
                trace: None,
            },
        })
        .collect();
    results.sort_by_key(|r| r.target.id);
    ComplianceReport { results, circuit: serialize(circuit), options: sim.options, timestamp: SystemTime::now() }
}
