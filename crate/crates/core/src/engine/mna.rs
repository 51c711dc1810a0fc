//! Unknown layout and residual/Jacobian assembly.
//!
//! The system is written as `F(x) = 0` where node rows are KCL sums of the
//! currents leaving the node and branch rows are the defining equations of
//! voltage-type elements.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::devices::{
    limiter_conduction, logistic, mosfet_current, mosfet_region, mosfet_small_signal, soft_clamp, ElementKind,
    MosfetParams, Polarity, Region, CLAMP_SOFTNESS, LOGIC_SOFTNESS, T_NOMINAL,
};
use crate::netlist::{Circuit, GROUND};

use super::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    /// Named circuit node.
    Node,
    /// Element-internal voltage with a KCL row.
    Internal,
    /// Branch current with a voltage-equation row.
    Branch,
}

#[derive(Debug, Clone)]
pub(crate) struct Slots {
    pub terms: Vec<Option<usize>>,
    pub internal: Option<usize>,
    pub branch: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CapStamp {
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub names: Vec<String>,
    pub kinds: Vec<Kind>,
    pub n_nodes: usize,
    pub slots: Vec<Slots>,
    pub caps: Vec<CapStamp>,
    pub nonlinear: bool,
    index: HashMap<String, usize>,
}

impl Layout {
    pub fn new(circuit: &Circuit) -> Self {
        let mut names: Vec<String> = circuit.nodes().into_iter().filter(|n| n != GROUND).collect();
        let n_nodes = names.len();
        let mut kinds = vec![Kind::Node; n_nodes];
        let mut index: HashMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut slots = Vec::new();
        let mut caps = Vec::new();
        let mut extra = |name: String, kind: Kind, names: &mut Vec<String>, kinds: &mut Vec<Kind>| {
            let k = names.len();
            index.insert(name.clone(), k);
            names.push(name);
            kinds.push(kind);
            k
        };
        for el in circuit.elements() {
            let terms: Vec<Option<usize>> = el
                .nodes
                .iter()
                .map(|n| if n == GROUND { None } else { Some(names.iter().position(|m| m == n).unwrap()) })
                .collect();
            let mut s = Slots { terms, internal: None, branch: None };
            match &el.kind {
                ElementKind::Capacitor { capacitance, esr } => {
                    let a = if *esr > 0.0 {
                        let m = extra(format!("{}#esr", el.name), Kind::Internal, &mut names, &mut kinds);
                        s.internal = Some(m);
                        Some(m)
                    } else {
                        s.terms[0]
                    };
                    caps.push(CapStamp { a, b: s.terms[1], c: *capacitance });
                }
                ElementKind::ErrorAmp(p) => {
                    let x = extra(format!("{}#x", el.name), Kind::Internal, &mut names, &mut kinds);
                    s.internal = Some(x);
                    caps.push(CapStamp { a: Some(x), b: None, c: p.a_dc / (2.0 * PI * p.gbw) });
                }
                ElementKind::VoltageSource { .. } | ElementKind::PorComparator(_) => {
                    s.branch = Some(extra(format!("{}#i", el.name), Kind::Branch, &mut names, &mut kinds));
                }
                _ => {}
            }
            slots.push(s);
        }
        let nonlinear = circuit.elements().iter().any(|e| e.kind.is_nonlinear());
        Self { names, kinds, n_nodes, slots, caps, nonlinear, index }
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, unknown: &str) -> Option<usize> {
        self.index.get(unknown).copied()
    }

    /// Whether unknown `k` is a voltage.
    pub fn is_voltage(&self, k: usize) -> bool {
        self.kinds[k] != Kind::Branch
    }
}

/// Charge and current of one capacitor at the last accepted time point.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CapHistory {
    pub q: f64,
    pub i: f64,
}

/// How capacitors enter the residual.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Reactive<'a> {
    Open,
    /// `i_new = a0 * (q_new - q_old) - b * i_old`.
    Companion { a0: f64, b: f64, hist: &'a [CapHistory] },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Eval<'a> {
    pub time: f64,
    pub source_scale: f64,
    /// Extra factor on independent current sources.
    pub load_scale: f64,
    pub gshunt: f64,
    /// Values the `gshunt` conductances pull toward (ground if `None`).
    pub anchor: Option<&'a [f64]>,
    pub gmin: f64,
    pub temperature: f64,
    pub latches: &'a [bool],
    pub reactive: Reactive<'a>,
}

pub(crate) struct System {
    pub jac: Matrix<f64>,
    pub res: Vec<f64>,
    /// Largest single contribution to each row.
    pub scale: Vec<f64>,
}

impl System {
    fn new(n: usize) -> Self {
        Self { jac: Matrix::zeros(n), res: vec![0.0; n], scale: vec![0.0; n] }
    }

    #[inline]
    fn j(&mut self, r: Option<usize>, c: Option<usize>, v: f64) {
        if let (Some(r), Some(c)) = (r, c) {
            self.jac.add(r, c, v);
        }
    }

    #[inline]
    fn f(&mut self, r: Option<usize>, v: f64) {
        if let Some(r) = r {
            self.res[r] += v;
            self.scale[r] = self.scale[r].max(v.abs());
        }
    }

    /// Current `i` flowing from `a` through the element to `b`.
    fn current(&mut self, a: Option<usize>, b: Option<usize>, i: f64, derivs: &[(Option<usize>, f64)]) {
        self.f(a, i);
        self.f(b, -i);
        for &(u, d) in derivs {
            self.j(a, u, d);
            self.j(b, u, -d);
        }
    }

    fn conductance(&mut self, a: Option<usize>, b: Option<usize>, g: f64, x: &[f64]) {
        let v = at(x, a) - at(x, b);
        self.current(a, b, g * v, &[(a, g), (b, -g)]);
    }
}

#[inline]
pub(crate) fn at(x: &[f64], u: Option<usize>) -> f64 {
    u.map_or(0.0, |k| x[k])
}

pub(crate) struct MosEval {
    pub id: f64,
    pub gd: f64,
    pub gg: f64,
    pub gs: f64,
    pub region: Region,
    pub gm: f64,
    pub gds: f64,
}

/// Drain current (entering the drain) with partials, for either polarity
/// and either direction of conduction.
pub(crate) fn mosfet_eval(p: &MosfetParams, vd: f64, vg: f64, vs: f64) -> MosEval {
    let sg = match p.polarity {
        Polarity::N => 1.0,
        Polarity::P => -1.0,
    };
    let (d, g, s) = (sg * vd, sg * vg, sg * vs);
    if d >= s {
        let (vgs, vds) = (g - s, d - s);
        let i = mosfet_current(p, vgs, vds);
        let (gm, gds) = mosfet_small_signal(p, vgs, vds);
        MosEval { id: sg * i, gd: gds, gg: gm, gs: -gm - gds, region: mosfet_region(p, vgs, vds), gm, gds }
    } else {
        let (vgd, vsd) = (g - d, s - d);
        let i = mosfet_current(p, vgd, vsd);
        let (gm, gds) = mosfet_small_signal(p, vgd, vsd);
        MosEval { id: -sg * i, gd: gm + gds, gg: -gm, gs: -gds, region: mosfet_region(p, vgd, vsd), gm, gds }
    }
}

fn source_level(kind: &ElementKind, e: &Eval) -> f64 {
    match kind {
        ElementKind::VoltageSource { waveform, tc } => {
            waveform.value_at(e.time) * e.source_scale * (1.0 + tc * (e.temperature - T_NOMINAL))
        }
        ElementKind::CurrentSource { waveform } => waveform.value_at(e.time) * e.source_scale * e.load_scale,
        _ => 0.0,
    }
}

pub(crate) fn assemble(circuit: &Circuit, layout: &Layout, x: &[f64], e: &Eval) -> System {
    let mut sys = System::new(layout.size());
    for (ei, (el, s)) in circuit.elements().iter().zip(&layout.slots).enumerate() {
        let t = &s.terms;
        match &el.kind {
            ElementKind::Resistor { resistance } => sys.conductance(t[0], t[1], 1.0 / resistance, x),
            ElementKind::Capacitor { esr, .. } => {
                if *esr > 0.0 {
                    sys.conductance(t[0], s.internal, 1.0 / esr, x);
                }
            }
            ElementKind::VoltageSource { .. } => {
                let k = s.branch.unwrap();
                let level = source_level(&el.kind, e);
                sys.current(t[0], t[1], x[k], &[(Some(k), 1.0)]);
                let (va, vb) = (at(x, t[0]), at(x, t[1]));
                sys.res[k] += va - vb - level;
                sys.scale[k] = va.abs().max(vb.abs()).max(level.abs());
                sys.j(Some(k), t[0], 1.0);
                sys.j(Some(k), t[1], -1.0);
            }
            ElementKind::CurrentSource { .. } => sys.current(t[0], t[1], source_level(&el.kind, e), &[]),
            ElementKind::Vccs { gm } => {
                let vc = at(x, t[2]) - at(x, t[3]);
                sys.current(t[0], t[1], gm * vc, &[(t[2], *gm), (t[3], -gm)]);
            }
            ElementKind::Mosfet(p) => {
                let m = mosfet_eval(p, at(x, t[0]), at(x, t[1]), at(x, t[2]));
                sys.current(t[0], t[2], m.id, &[(t[0], m.gd), (t[1], m.gg), (t[2], m.gs)]);
                sys.conductance(t[0], t[2], e.gmin, x);
            }
            ElementKind::ErrorAmp(p) => {
                let xi = s.internal;
                let a = p.a_dc;
                let vd = at(x, t[0]) - at(x, t[1]) + p.offset_at(e.temperature);
                let vx = at(x, xi);
                sys.f(xi, vx);
                sys.f(xi, -a * vd);
                sys.j(xi, xi, 1.0);
                sys.j(xi, t[0], -a);
                sys.j(xi, t[1], a);
                let (sc, dsc) = soft_clamp(vx, p.swing_min, p.swing_max, CLAMP_SOFTNESS);
                let g = 1.0 / p.r_out;
                let i = g * (at(x, t[2]) - at(x, t[3]) + sc);
                sys.current(t[2], None, i, &[(t[2], g), (t[3], -g), (xi, g * dsc)]);
            }
            ElementKind::CurrentLimiter(p) => {
                let c = limiter_conduction(p, at(x, t[0]) - at(x, t[1]), at(x, t[2]));
                sys.current(t[0], t[1], c.current, &[(t[0], c.g_ab), (t[1], -c.g_ab), (t[2], c.g_sense)]);
                sys.conductance(t[0], t[1], e.gmin, x);
            }
            ElementKind::PorComparator(p) => {
                let k = s.branch.unwrap();
                let (sense, out, supply) = (t[0], t[1], t[2]);
                let th = p.threshold(e.latches.get(ei).copied().unwrap_or(false));
                let (sig, dsig) = logistic((at(x, sense) - th) / LOGIC_SOFTNESS);
                let vsup = at(x, supply);
                sys.current(out, None, x[k], &[(Some(k), 1.0)]);
                sys.res[k] += at(x, out) - vsup * sig;
                sys.scale[k] = at(x, out).abs().max((vsup * sig).abs());
                sys.j(Some(k), out, 1.0);
                sys.j(Some(k), supply, -sig);
                sys.j(Some(k), sense, -vsup * dsig / LOGIC_SOFTNESS);
            }
            ElementKind::EnableSwitch(p) => {
                let (g, dg) = p.conductance(at(x, t[2]));
                let v = at(x, t[0]) - at(x, t[1]);
                sys.current(t[0], t[1], g * v, &[(t[0], g), (t[1], -g), (t[2], dg * v)]);
                sys.conductance(t[0], t[1], e.gmin, x);
            }
        }
    }
    if let Reactive::Companion { a0, b, hist } = e.reactive {
        for (cap, h) in layout.caps.iter().zip(hist) {
            let q = cap.c * (at(x, cap.a) - at(x, cap.b));
            let i = a0 * (q - h.q) - b * h.i;
            let g = a0 * cap.c;
            sys.current(cap.a, cap.b, i, &[(cap.a, g), (cap.b, -g)]);
        }
    }
    if e.gshunt > 0.0 {
        for k in 0..layout.size() {
            if layout.kinds[k] != Kind::Branch {
                let x0 = e.anchor.map_or(0.0, |a| a[k]);
                sys.f(Some(k), e.gshunt * (x[k] - x0));
                sys.j(Some(k), Some(k), e.gshunt);
            }
        }
    }
    sys
}

/// Capacitance matrix `C` such that the small-signal admittance is
/// `J + jωC`.
pub(crate) fn capacitance_matrix(layout: &Layout) -> Matrix<f64> {
    let mut m = Matrix::zeros(layout.size());
    for cap in &layout.caps {
        for (r, sr) in [(cap.a, 1.0), (cap.b, -1.0)] {
            for (c, sc) in [(cap.a, 1.0), (cap.b, -1.0)] {
                if let (Some(r), Some(c)) = (r, c) {
                    m.add(r, c, sr * sc * cap.c);
                }
            }
        }
    }
    m
}

/// Capacitor currents for a companion step, in `layout.caps` order.
pub(crate) fn cap_currents(layout: &Layout, x: &[f64], a0: f64, b: f64, hist: &[CapHistory]) -> Vec<CapHistory> {
    layout
        .caps
        .iter()
        .zip(hist)
        .map(|(cap, h)| {
            let q = cap.c * (at(x, cap.a) - at(x, cap.b));
            CapHistory { q, i: a0 * (q - h.q) - b * h.i }
        })
        .collect()
}

pub(crate) fn cap_rest(layout: &Layout, x: &[f64]) -> Vec<CapHistory> {
    layout
        .caps
        .iter()
        .map(|cap| CapHistory { q: cap.c * (at(x, cap.a) - at(x, cap.b)), i: 0.0 })
        .collect()
}

/// Per-element current entering the first terminal. Voltage sources and
/// comparator outputs report the current they deliver; error amplifiers
/// report the current delivered at their output. `cap_i` gives the
/// current of ideal (ESR-free) capacitors.
pub(crate) fn element_currents(circuit: &Circuit, layout: &Layout, x: &[f64], e: &Eval, cap_i: &[f64]) -> Vec<f64> {
    let mut cap_k = 0;
    circuit
        .elements()
        .iter()
        .zip(&layout.slots)
        .map(|(el, s)| {
            let t = &s.terms;
            let v = |k: usize| at(x, t[k]);
            match &el.kind {
                ElementKind::Resistor { resistance } => (v(0) - v(1)) / resistance,
                ElementKind::Capacitor { esr, .. } => {
                    let i = if *esr > 0.0 {
                        (v(0) - at(x, s.internal)) / esr
                    } else {
                        cap_i.get(cap_k).copied().unwrap_or(0.0)
                    };
                    cap_k += 1;
                    i
                }
                ElementKind::VoltageSource { .. } | ElementKind::PorComparator(_) => -x[s.branch.unwrap()],
                ElementKind::CurrentSource { .. } => source_level(&el.kind, e),
                ElementKind::Vccs { gm } => gm * (v(2) - v(3)),
                ElementKind::Mosfet(p) => mosfet_eval(p, v(0), v(1), v(2)).id,
                ElementKind::ErrorAmp(p) => {
                    cap_k += 1;
                    let (sc, _) = soft_clamp(at(x, s.internal), p.swing_min, p.swing_max, CLAMP_SOFTNESS);
                    -(v(2) - v(3) + sc) / p.r_out
                }
                ElementKind::CurrentLimiter(p) => limiter_conduction(p, v(0) - v(1), v(2)).current,
                ElementKind::EnableSwitch(p) => p.conductance(v(2)).0 * (v(0) - v(1)),
            }
        })
        .collect()
}

/// Next latch state of every comparator given an accepted solution.
pub(crate) fn next_latches(circuit: &Circuit, layout: &Layout, x: &[f64], latches: &[bool]) -> Vec<bool> {
    circuit
        .elements()
        .iter()
        .zip(&layout.slots)
        .enumerate()
        .map(|(ei, (el, s))| match &el.kind {
            ElementKind::PorComparator(p) => {
                let old = latches.get(ei).copied().unwrap_or(false);
                at(x, s.terms[0]) > p.threshold(old)
            }
            _ => false,
        })
        .collect()
}
