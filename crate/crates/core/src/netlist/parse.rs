use std::collections::HashMap;

use super::{validate, Circuit, Element, LoopBreak, NetlistError, Probe, Waveform};
use crate::devices::{
    ActiveLevel, ElementKind, ErrorAmpParams, LimiterParams, MosfetParams, Polarity, PorParams, SwitchParams,
};
use crate::netlist::value::parse_value;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Open,
    Close,
    Eq,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word = String::new();
    let mut word_col = 0;
    for (idx, ch) in line.chars().enumerate() {
        let col = idx + 1;
        let special = match ch {
            '(' => Some(Tok::Open),
            ')' => Some(Tok::Close),
            '=' => Some(Tok::Eq),
            ',' => None,
            c if c.is_whitespace() => None,
            _ => {
                if word.is_empty() {
                    word_col = col;
                }
                word.push(ch);
                continue;
            }
        };
        if !word.is_empty() {
            out.push(Token { tok: Tok::Word(std::mem::take(&mut word)), column: word_col });
        }
        if let Some(tok) = special {
            out.push(Token { tok, column: col });
        }
    }
    if !word.is_empty() {
        out.push(Token { tok: Tok::Word(word), column: word_col });
    }
    out
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    eol_col: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> NetlistError {
        NetlistError::Syntax { line: self.line, column, message: message.into() }
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.eol_col, |t| t.column)
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn word(&mut self, what: &str) -> Result<(String, usize), NetlistError> {
        match self.toks.get(self.pos) {
            Some(Token { tok: Tok::Word(w), column }) => {
                self.pos += 1;
                Ok((w.clone(), *column))
            }
            _ => Err(self.err(self.column(), format!("expected {what}"))),
        }
    }

    fn value(&mut self, what: &str) -> Result<f64, NetlistError> {
        let (w, col) = self.word(what)?;
        parse_value(&w).ok_or_else(|| self.err(col, format!("invalid number `{w}` for {what}")))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), NetlistError> {
        match self.toks.get(self.pos) {
            Some(t) if t.tok == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(self.column(), format!("expected {what}"))),
        }
    }

    fn peek_is(&self, tok: &Tok) -> bool {
        self.toks.get(self.pos).is_some_and(|t| &t.tok == tok)
    }

    /// `key=value` pairs until end of line.
    fn params(&mut self) -> Result<Params, NetlistError> {
        let mut map = HashMap::new();
        while !self.done() {
            let (key, col) = self.word("parameter name")?;
            self.expect(Tok::Eq, "`=` after parameter name")?;
            let (val, vcol) = self.word("parameter value")?;
            if map.insert(key.to_ascii_lowercase(), (val, vcol)).is_some() {
                return Err(self.err(col, format!("parameter `{key}` given twice")));
            }
        }
        Ok(Params { map, line: self.line, eol_col: self.eol_col })
    }
}

struct Params {
    map: HashMap<String, (String, usize)>,
    line: usize,
    eol_col: usize,
}

impl Params {
    fn take_raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn num(&mut self, key: &str) -> Result<Option<f64>, NetlistError> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((v, col)) => parse_value(&v).map(Some).ok_or(NetlistError::Syntax {
                line: self.line,
                column: col,
                message: format!("invalid number `{v}` for `{key}`"),
            }),
        }
    }

    fn req(&mut self, key: &str) -> Result<f64, NetlistError> {
        self.num(key)?.ok_or(NetlistError::Syntax {
            line: self.line,
            column: self.eol_col,
            message: format!("missing parameter `{key}`"),
        })
    }

    fn finish(self) -> Result<(), NetlistError> {
        if let Some((k, (_, col))) = self.map.into_iter().min_by_key(|(_, (_, c))| *c) {
            return Err(NetlistError::Syntax {
                line: self.line,
                column: col,
                message: format!("unknown parameter `{k}`"),
            });
        }
        Ok(())
    }
}

fn waveform(cur: &mut Cursor) -> Result<Waveform, NetlistError> {
    let (head, col) = cur.word("source value")?;
    let upper = head.to_ascii_uppercase();
    let list = |cur: &mut Cursor| -> Result<Vec<f64>, NetlistError> {
        cur.expect(Tok::Open, "`(`")?;
        let mut vals = Vec::new();
        while !cur.peek_is(&Tok::Close) {
            if cur.done() {
                return Err(cur.err(cur.eol_col, "unclosed `(`"));
            }
            vals.push(cur.value("waveform argument")?);
        }
        cur.expect(Tok::Close, "`)`")?;
        Ok(vals)
    };
    let arity = |cur: &Cursor, vals: &[f64], n: usize, name: &str| {
        if vals.len() == n {
            Ok(())
        } else {
            Err(cur.err(col, format!("{name} takes {n} arguments, got {}", vals.len())))
        }
    };
    let wave = match upper.as_str() {
        "DC" => Waveform::Dc(cur.value("DC level")?),
        "STEP" => {
            let v = list(cur)?;
            arity(cur, &v, 4, "STEP")?;
            Waveform::Step { initial: v[0], fin: v[1], t_start: v[2], edge: v[3] }
        }
        "SIN" => {
            let v = list(cur)?;
            arity(cur, &v, 3, "SIN")?;
            Waveform::Sine { offset: v[0], amplitude: v[1], freq: v[2] }
        }
        "PWL" => {
            let v = list(cur)?;
            if v.is_empty() || v.len() % 2 != 0 {
                return Err(cur.err(col, "PWL takes an even, nonzero number of arguments"));
            }
            Waveform::Pwl(v.chunks(2).map(|c| (c[0], c[1])).collect())
        }
        _ => Waveform::Dc(parse_value(&head).ok_or_else(|| cur.err(col, format!("invalid source value `{head}`")))?),
    };
    wave.validate().map_err(|source| NetlistError::Waveform { line: cur.line, source })?;
    Ok(wave)
}

fn nodes(cur: &mut Cursor, n: usize) -> Result<Vec<String>, NetlistError> {
    (0..n).map(|_| cur.word("node name").map(|(w, _)| w)).collect()
}

fn device<T>(line: usize, r: Result<T, crate::devices::DeviceError>) -> Result<T, NetlistError> {
    r.map_err(|source| NetlistError::Device { line, source })
}

/// Parse one element line into an element.
fn element(cur: &mut Cursor) -> Result<Element, NetlistError> {
    let line = cur.line;
    let (head, head_col) = cur.word("element name")?;
    let keyword = head.to_ascii_uppercase();
    let (name, kind_tag) = match keyword.as_str() {
        "EAMP" | "ILIM" | "POR" | "ENSW" => (cur.word("element name")?.0, keyword.clone()),
        _ => {
            let first = head.chars().next().map(|c| c.to_ascii_uppercase());
            match first {
                Some(c @ ('R' | 'C' | 'V' | 'I' | 'M' | 'G')) => (head.clone(), c.to_string()),
                _ => return Err(NetlistError::UnknownElement { line, name: head }),
            }
        }
    };
    let _ = head_col;
    let (nodes, kind) = match kind_tag.as_str() {
        "R" => {
            let n = nodes(cur, 2)?;
            let r = cur.value("resistance")?;
            cur.params()?.finish()?;
            (n, device(line, ElementKind::resistor(r))?)
        }
        "C" => {
            let n = nodes(cur, 2)?;
            let c = cur.value("capacitance")?;
            let mut p = cur.params()?;
            let esr = p.num("esr")?.unwrap_or(0.0);
            p.finish()?;
            (n, device(line, ElementKind::capacitor(c, esr))?)
        }
        "V" => {
            let n = nodes(cur, 2)?;
            let w = waveform(cur)?;
            let mut p = cur.params()?;
            let tc = p.num("tc")?.unwrap_or(0.0);
            p.finish()?;
            (n, ElementKind::VoltageSource { waveform: w, tc })
        }
        "I" => {
            let n = nodes(cur, 2)?;
            let w = waveform(cur)?;
            cur.params()?.finish()?;
            (n, ElementKind::CurrentSource { waveform: w })
        }
        "G" => {
            let n = nodes(cur, 4)?;
            let gm = cur.value("transconductance")?;
            cur.params()?.finish()?;
            (n, device(line, ElementKind::vccs(gm))?)
        }
        "M" => {
            let n = nodes(cur, 3)?;
            let (model, col) = cur.word("NMOS or PMOS")?;
            let polarity = match model.to_ascii_uppercase().as_str() {
                "NMOS" => Polarity::N,
                "PMOS" => Polarity::P,
                _ => return Err(cur.err(col, format!("expected NMOS or PMOS, got `{model}`"))),
            };
            let mut p = cur.params()?;
            let beta = p.req("beta")?;
            let vt = p.req("vt")?;
            let lambda = p.num("lambda")?.unwrap_or(0.0);
            p.finish()?;
            (n, ElementKind::Mosfet(device(line, MosfetParams::new(polarity, beta, vt, lambda))?))
        }
        "EAMP" => {
            let n = nodes(cur, 4)?;
            let mut p = cur.params()?;
            let ea = ErrorAmpParams::new(
                p.req("a_dc")?,
                p.req("gbw")?,
                p.req("r_out")?,
                p.num("vos")?.unwrap_or(0.0),
                p.num("vos_tc")?.unwrap_or(0.0),
                p.req("swing_min")?,
                p.req("swing_max")?,
            );
            p.finish()?;
            (n, ElementKind::ErrorAmp(device(line, ea)?))
        }
        "ILIM" => {
            let n = nodes(cur, 3)?;
            let mut p = cur.params()?;
            let imax = p.req("imax")?;
            let isc = p.req("isc")?;
            let vnom = p.req("vnom")?;
            let gon = p.num("gon")?.unwrap_or(LimiterParams::DEFAULT_G_ON);
            p.finish()?;
            (n, ElementKind::CurrentLimiter(device(line, LimiterParams::with_conductance(imax, isc, vnom, gon))?))
        }
        "POR" => {
            let n = nodes(cur, 3)?;
            let mut p = cur.params()?;
            let vth = p.req("vth")?;
            let hyst = p.num("hyst")?.unwrap_or(0.0);
            p.finish()?;
            (n, ElementKind::PorComparator(device(line, PorParams::new(vth, hyst))?))
        }
        "ENSW" => {
            let n = nodes(cur, 3)?;
            let mut p = cur.params()?;
            let vth = p.req("vth")?;
            let ron = p.req("ron")?;
            let active = match p.take_raw("active") {
                None => ActiveLevel::High,
                Some((v, col)) => match v.to_ascii_lowercase().as_str() {
                    "high" => ActiveLevel::High,
                    "low" => ActiveLevel::Low,
                    _ => return Err(cur.err(col, format!("active must be high or low, got `{v}`"))),
                },
            };
            p.finish()?;
            (n, ElementKind::EnableSwitch(device(line, SwitchParams::new(vth, active, ron))?))
        }
        _ => unreachable!(),
    };
    Ok(Element { name, nodes, kind })
}

fn directive(cur: &mut Cursor, circuit: &mut Circuit) -> Result<bool, NetlistError> {
    let (head, col) = cur.word("directive")?;
    match head.to_ascii_lowercase().as_str() {
        ".temp" => {
            circuit.temperature = cur.value("temperature")?;
        }
        ".break" => {
            let (element, _) = cur.word("error-amplifier name")?;
            let (term, tcol) = cur.word("inp or inn")?;
            let terminal = match term.to_ascii_lowercase().as_str() {
                "inp" => 0,
                "inn" => 1,
                _ => return Err(cur.err(tcol, format!("expected inp or inn, got `{term}`"))),
            };
            circuit.loop_break = Some(LoopBreak { element, terminal });
        }
        ".probe" => {
            let (alias, _) = cur.word("probe alias")?;
            let (kind, kcol) = cur.word("v or i")?;
            cur.expect(Tok::Open, "`(`")?;
            let (target, _) = cur.word("probe target")?;
            cur.expect(Tok::Close, "`)`")?;
            let probe = match kind.to_ascii_lowercase().as_str() {
                "v" => Probe::Voltage(target),
                "i" => Probe::Current(target),
                _ => return Err(cur.err(kcol, format!("expected v(...) or i(...), got `{kind}`"))),
            };
            circuit.add_probe(alias, probe);
        }
        ".end" => return Ok(true),
        _ => return Err(cur.err(col, format!("unknown directive `{head}`"))),
    }
    if !cur.done() {
        return Err(cur.err(cur.column(), "unexpected trailing text"));
    }
    Ok(false)
}

/// Parse and validate a netlist.
pub fn parse_netlist(text: &str) -> Result<Circuit, NetlistError> {
    let mut circuit = Circuit::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        let toks = tokenize(raw);
        let mut cur = Cursor { toks: &toks, pos: 0, line, eol_col: raw.chars().count() + 1 };
        if trimmed.starts_with('.') {
            if directive(&mut cur, &mut circuit)? {
                break;
            }
            continue;
        }
        let el = element(&mut cur)?;
        if !cur.done() {
            return Err(cur.err(cur.column(), "unexpected trailing text"));
        }
        let key = el.name.to_ascii_lowercase();
        if seen.insert(key, line).is_some() {
            return Err(NetlistError::DuplicateName { line, name: el.name });
        }
        circuit.add(el).map_err(|_| NetlistError::DuplicateName { line, name: String::new() })?;
    }
    validate(&circuit).map_err(NetlistError::Validation)?;
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resistor_line() {
        let c = parse_netlist("V1 in 0 1\nR1 in out 1k\nR2 out 0 1k").unwrap();
        let r = c.element("R1").unwrap();
        assert_eq!(r.nodes, vec!["in", "out"]);
        assert_eq!(r.kind, ElementKind::Resistor { resistance: 1000.0 });
    }

    #[test]
    fn duplicate_name_reports_line() {
        let err = parse_netlist("R1 in out 1k\nR1 out 0 1k").unwrap_err();
        assert_eq!(err, NetlistError::DuplicateName { line: 2, name: "R1".into() });
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_netlist("V1 a 0 1\nR1 a 0 1q").unwrap_err();
        match err {
            NetlistError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 8)),
            e => panic!("{e}"),
        }
        let err = parse_netlist("V1 a 0 STEP(0 1 2)").unwrap_err();
        assert!(matches!(err, NetlistError::Syntax { line: 1, .. }), "{err}");
    }

    #[test]
    fn unknown_element() {
        let err = parse_netlist("X1 a 0 1").unwrap_err();
        assert_eq!(err, NetlistError::UnknownElement { line: 1, name: "X1".into() });
    }

    #[test]
    fn behavioral_keywords_and_directives() {
        let text = "\
* test deck
.temp 85
V1 in 0 STEP(0 1 1u 100n) tc=15e-6
EAMP EA1 ref fb out 0 a_dc=1000 gbw=1meg r_out=10 swing_min=-5 swing_max=5
R1 out fb 1k
R2 fb 0 1k
V2 ref 0 DC 0.5
ILIM L1 in out fb imax=100m isc=30m vnom=2.4
POR P1 in por in vth=2.35
ENSW S1 por 0 in vth=0.9 active=low ron=1
.break EA1 inn
.probe vo v(out)
";
        let c = parse_netlist(text).unwrap();
        assert_eq!(c.temperature, 85.0);
        assert_eq!(c.loop_break, Some(LoopBreak { element: "EA1".into(), terminal: 1 }));
        assert_eq!(c.resolve_probe("vo"), Some(Probe::Voltage("out".into())));
        assert!(matches!(c.element("P1").unwrap().kind, ElementKind::PorComparator(_)));
        match &c.element("V1").unwrap().kind {
            ElementKind::VoltageSource { waveform, tc } => {
                assert_eq!(*tc, 15e-6);
                assert_eq!(waveform.breakpoints().len(), 2);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn validation_failure_is_rejected() {
        let err = parse_netlist("R1 a b 1k\nR2 a b 1k").unwrap_err();
        assert!(matches!(err, NetlistError::Validation(v) if v.contains(&super::super::Violation::GroundMissing)));
    }

    #[test]
    fn missing_and_unknown_params() {
        assert!(parse_netlist("M1 d g 0 NMOS vt=0.5\nV1 d 0 1\nV2 g 0 1").is_err());
        assert!(parse_netlist("C1 a 0 1u foo=2\nR1 a 0 1").is_err());
    }
}
