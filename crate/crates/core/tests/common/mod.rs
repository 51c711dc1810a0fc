//! Seeded random circuits covering every element kind and waveform.

use rand::Rng;

use ldo_bench::devices::{
    ActiveLevel, ElementKind, ErrorAmpParams, LimiterParams, MosfetParams, Polarity, PorParams, SwitchParams,
};
use ldo_bench::netlist::{Circuit, Element, LoopBreak, Probe, Waveform, GROUND};

/// Positive value spread over many decades, full mantissa.
fn magnitude<R: Rng>(rng: &mut R) -> f64 {
    10f64.powf(rng.gen_range(-12.0..6.0))
}

fn signed<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(-10.0..10.0)
}

fn waveform<R: Rng>(rng: &mut R) -> Waveform {
    match rng.gen_range(0..4) {
        0 => Waveform::Dc(signed(rng)),
        1 => Waveform::step(signed(rng), signed(rng), magnitude(rng), if rng.gen_bool(0.3) { 0.0 } else { magnitude(rng) })
            .unwrap(),
        2 => Waveform::Sine { offset: signed(rng), amplitude: signed(rng), freq: magnitude(rng) },
        _ => {
            let mut t = magnitude(rng);
            let knots = (0..rng.gen_range(1..6))
                .map(|_| {
                    t *= 1.0 + rng.gen_range(0.01..10.0);
                    (t, signed(rng))
                })
                .collect();
            Waveform::pwl(knots).unwrap()
        }
    }
}

fn kind<R: Rng>(rng: &mut R) -> (char, ElementKind) {
    match rng.gen_range(0..10) {
        0 => ('R', ElementKind::resistor(magnitude(rng)).unwrap()),
        1 => {
            let esr = if rng.gen_bool(0.5) { 0.0 } else { magnitude(rng) };
            ('C', ElementKind::capacitor(magnitude(rng), esr).unwrap())
        }
        2 => {
            let tc = if rng.gen_bool(0.5) { 0.0 } else { signed(rng) * 1e-5 };
            ('V', ElementKind::VoltageSource { waveform: waveform(rng), tc })
        }
        3 => ('I', ElementKind::CurrentSource { waveform: waveform(rng) }),
        4 => ('G', ElementKind::vccs(signed(rng)).unwrap()),
        5 => {
            let pol = if rng.gen_bool(0.5) { Polarity::N } else { Polarity::P };
            let m = MosfetParams::new(pol, magnitude(rng), signed(rng), rng.gen_range(0.0..0.2)).unwrap();
            ('M', ElementKind::Mosfet(m))
        }
        6 => {
            let lo = signed(rng);
            let ea = ErrorAmpParams::new(
                1.0 + magnitude(rng),
                magnitude(rng),
                magnitude(rng),
                signed(rng) * 1e-3,
                signed(rng) * 1e-6,
                lo,
                lo + magnitude(rng),
            )
            .unwrap();
            ('E', ElementKind::ErrorAmp(ea))
        }
        7 => {
            let i_sc = magnitude(rng);
            let l = LimiterParams::with_conductance(i_sc * (1.0 + magnitude(rng)), i_sc, magnitude(rng), magnitude(rng))
                .unwrap();
            ('L', ElementKind::CurrentLimiter(l))
        }
        8 => ('P', ElementKind::PorComparator(PorParams::new(signed(rng), rng.gen_range(0.0..0.5)).unwrap())),
        _ => {
            let active = if rng.gen_bool(0.5) { ActiveLevel::High } else { ActiveLevel::Low };
            ('S', ElementKind::EnableSwitch(SwitchParams::new(signed(rng), active, magnitude(rng)).unwrap()))
        }
    }
}

/// A circuit that passes validation.
pub fn random_circuit<R: Rng>(rng: &mut R) -> Circuit {
    let pool: Vec<String> =
        std::iter::once(GROUND.to_string()).chain((1..=rng.gen_range(2..7)).map(|k| format!("n{k}"))).collect();
    let mut c = Circuit::new();
    c.add(Element::new("R0", &["n1", GROUND], ElementKind::resistor(1e3).unwrap())).unwrap();
    let mut next = 1;
    for _ in 0..rng.gen_range(1..14) {
        let (tag, k) = kind(rng);
        let n = k.terminal_count();
        let nodes: Vec<&str> = loop {
            let pick: Vec<&str> = (0..n).map(|_| pool[rng.gen_range(0..pool.len())].as_str()).collect();
            if pick.iter().any(|x| *x != pick[0]) {
                break pick;
            }
        };
        // names of keyword elements need not carry a type letter
        let name = match tag {
            'E' | 'L' | 'P' | 'S' => format!("X{tag}{next}"),
            _ => format!("{tag}{next}"),
        };
        next += 1;
        c.add(Element::new(name, &nodes, k)).unwrap();
    }
    let mut counts = std::collections::BTreeMap::new();
    for e in c.elements() {
        for n in &e.nodes {
            *counts.entry(n.clone()).or_insert(0) += 1;
        }
    }
    for (node, count) in counts {
        if count < 2 && node != GROUND {
            c.add(Element::new(format!("R{next}"), &[&node, GROUND], ElementKind::resistor(magnitude(rng)).unwrap()))
                .unwrap();
            next += 1;
        }
    }
    if rng.gen_bool(0.3) {
        c.temperature = rng.gen_range(-55.0..150.0);
    }
    let amp = c.elements().iter().find(|e| matches!(e.kind, ElementKind::ErrorAmp(_))).map(|e| e.name.clone());
    if let Some(element) = amp {
        if rng.gen_bool(0.7) {
            c.loop_break = Some(LoopBreak { element, terminal: rng.gen_range(0..2) });
        }
    }
    let used = c.nodes();
    for k in 0..rng.gen_range(0..3) {
        let probe = if rng.gen_bool(0.5) {
            Probe::Voltage(used[rng.gen_range(0..used.len())].clone())
        } else {
            Probe::Current(c.elements()[rng.gen_range(0..c.elements().len())].name.clone())
        };
        c.add_probe(format!("p{k}"), probe);
    }
    c
}
