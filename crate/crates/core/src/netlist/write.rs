use std::fmt::Write as _;

use super::{format_value as v, Circuit, Probe, Waveform, DEFAULT_TEMPERATURE};
use crate::devices::{ActiveLevel, ElementKind, Polarity};

fn wave(w: &Waveform) -> String {
    match w {
        Waveform::Dc(x) => format!("DC {}", v(*x)),
        Waveform::Step { initial, fin, t_start, edge } => {
            format!("STEP({} {} {} {})", v(*initial), v(*fin), v(*t_start), v(*edge))
        }
        Waveform::Sine { offset, amplitude, freq } => format!("SIN({} {} {})", v(*offset), v(*amplitude), v(*freq)),
        Waveform::Pwl(points) => {
            let body: Vec<String> = points.iter().map(|(t, x)| format!("{} {}", v(*t), v(*x))).collect();
            format!("PWL({})", body.join(" "))
        }
    }
}

/// Canonical netlist text. `parse_netlist(serialize(c)) == c` for any valid
/// circuit.
pub fn serialize(circuit: &Circuit) -> String {
    let mut out = String::new();
    if circuit.temperature != DEFAULT_TEMPERATURE {
        let _ = writeln!(out, ".temp {}", v(circuit.temperature));
    }
    for el in circuit.elements() {
        let nodes = el.nodes.join(" ");
        let name = &el.name;
        let line = match &el.kind {
            ElementKind::Resistor { resistance } => format!("{name} {nodes} {}", v(*resistance)),
            ElementKind::Capacitor { capacitance, esr } => {
                if *esr == 0.0 {
                    format!("{name} {nodes} {}", v(*capacitance))
                } else {
                    format!("{name} {nodes} {} esr={}", v(*capacitance), v(*esr))
                }
            }
            ElementKind::VoltageSource { waveform, tc } => {
                if *tc == 0.0 {
                    format!("{name} {nodes} {}", wave(waveform))
                } else {
                    format!("{name} {nodes} {} tc={}", wave(waveform), v(*tc))
                }
            }
            ElementKind::CurrentSource { waveform } => format!("{name} {nodes} {}", wave(waveform)),
            ElementKind::Vccs { gm } => format!("{name} {nodes} {}", v(*gm)),
            ElementKind::Mosfet(m) => format!(
                "{name} {nodes} {} beta={} vt={} lambda={}",
                match m.polarity {
                    Polarity::N => "NMOS",
                    Polarity::P => "PMOS",
                },
                v(m.beta),
                v(m.vt),
                v(m.lambda)
            ),
            ElementKind::ErrorAmp(e) => format!(
                "EAMP {name} {nodes} a_dc={} gbw={} r_out={} vos={} vos_tc={} swing_min={} swing_max={}",
                v(e.a_dc),
                v(e.gbw),
                v(e.r_out),
                v(e.v_os),
                v(e.v_os_tc),
                v(e.swing_min),
                v(e.swing_max)
            ),
            ElementKind::CurrentLimiter(l) => format!(
                "ILIM {name} {nodes} imax={} isc={} vnom={} gon={}",
                v(l.i_max),
                v(l.i_sc),
                v(l.v_nom),
                v(l.g_on)
            ),
            ElementKind::PorComparator(p) => {
                format!("POR {name} {nodes} vth={} hyst={}", v(p.v_th), v(p.hysteresis))
            }
            ElementKind::EnableSwitch(s) => format!(
                "ENSW {name} {nodes} vth={} active={} ron={}",
                v(s.threshold),
                match s.active {
                    ActiveLevel::High => "high",
                    ActiveLevel::Low => "low",
                },
                v(s.r_on)
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    if let Some(lb) = &circuit.loop_break {
        let _ = writeln!(out, ".break {} {}", lb.element, if lb.terminal == 0 { "inp" } else { "inn" });
    }
    for (alias, probe) in &circuit.probes {
        let text = match probe {
            Probe::Voltage(n) => format!("v({n})"),
            Probe::Current(e) => format!("i({e})"),
        };
        let _ = writeln!(out, ".probe {alias} {text}");
    }
    out
}
