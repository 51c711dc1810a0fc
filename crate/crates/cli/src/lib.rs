//! Command-line front end for `ldo-bench`.
//!
//! [`run`] parses arguments, runs one analysis or characterization, writes
//! CSV (and SVG with `--plot`) into the output directory and returns the
//! process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | usage error |
//! | 2 | parse or validation error in an input file or the circuit |
//! | 3 | solver failure |
//! | 4 | a compliance target did not pass |

pub mod svg;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use ldo_bench::charlab::{self, measure_spec, CharError, Conditions, SpecId};
use ldo_bench::engine::{log_grid, EngineError, Simulator, StepPolicy, SweepSpec, SweepTarget, Table};
use ldo_bench::ldo::{apply_config, build_ldo, default_params};
use ldo_bench::netlist::{format_value, parse_netlist, parse_value, validate, Circuit};

use svg::{emit_svg, Axes, Trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_COMPLIANCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "ldo-bench", version, about = "Behavioral LDO simulation and characterization")]
struct Cli {
    /// Netlist to simulate; the built-in regulator when absent.
    #[arg(long, global = true, value_name = "FILE", conflicts_with = "params")]
    netlist: Option<PathBuf>,
    /// `key = value unit` overrides for the built-in regulator.
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Directory for CSV and SVG output.
    #[arg(long, short, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Also write an SVG chart per trace.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// DC operating point.
    Op,
    /// DC sweep of a source, element value or `temp`.
    Dc {
        #[arg(long, num_args = 4, value_names = ["TARGET", "START", "STOP", "POINTS"], required = true, allow_negative_numbers = true)]
        sweep: Vec<String>,
        /// Logarithmic spacing.
        #[arg(long)]
        log: bool,
        /// Probes to record; defaults to the circuit's aliases or every node.
        #[arg(long = "probe", value_name = "PROBE")]
        probes: Vec<String>,
    },
    /// Small-signal response to a unit excitation of one source.
    Ac {
        #[arg(long, value_name = "SOURCE")]
        from: String,
        #[arg(long = "probe", value_name = "PROBE", required = true)]
        probes: Vec<String>,
        #[arg(long, value_parser = number, default_value = "1")]
        fstart: f64,
        #[arg(long, value_parser = number, default_value = "1e9")]
        fstop: f64,
        /// Points per decade.
        #[arg(long, default_value_t = 10)]
        ppd: usize,
    },
    /// Transient from the operating point.
    Tran {
        #[arg(long, value_parser = number)]
        tstop: f64,
        /// Fixed time step; adaptive when absent.
        #[arg(long, value_parser = number)]
        dt: Option<f64>,
        #[arg(long = "probe", value_name = "PROBE")]
        probes: Vec<String>,
    },
    /// One characterization, or `all`, at the default target conditions.
    Char {
        /// A spec id or `all`.
        #[arg(value_parser = spec_choice, value_name = "SPEC")]
        spec: Choice,
    },
    /// Measure every target and compare.
    Report {
        /// Targets file; the built-in table when absent.
        #[arg(long, value_name = "FILE")]
        targets: Option<PathBuf>,
    },
}

fn number(text: &str) -> Result<f64, String> {
    parse_value(text).ok_or_else(|| format!("`{text}` is not a number"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Choice {
    All,
    One(SpecId),
}

fn spec_choice(text: &str) -> Result<Choice, String> {
    if text == "all" {
        return Ok(Choice::All);
    }
    SpecId::parse(text).map(Choice::One).ok_or_else(|| {
        let ids: Vec<&str> = SpecId::ALL.iter().map(|i| i.as_str()).collect();
        format!("unknown spec `{text}`; expected all or one of {}", ids.join(", "))
    })
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn engine_code(e: &EngineError) -> i32 {
    match e {
        EngineError::Singular(_)
        | EngineError::NonConvergence { .. }
        | EngineError::TimestepTooSmall { .. }
        | EngineError::NoCrossing { .. } => EXIT_SOLVER,
        _ => EXIT_INVALID,
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        fail(engine_code(&e), e.to_string())
    }
}

impl From<CharError> for Failure {
    fn from(e: CharError) -> Self {
        let code = match &e {
            CharError::Engine(inner) => engine_code(inner),
            CharError::MissingElement(_) | CharError::Precondition(_) => EXIT_INVALID,
            _ => EXIT_SOLVER,
        };
        fail(code, e.to_string())
    }
}

/// Run with `args` (program name first) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", path.display())))
}

fn load_circuit(cli: &Cli) -> Result<Circuit, Failure> {
    let circuit = if let Some(path) = &cli.netlist {
        parse_netlist(&read(path)?).map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", path.display())))?
    } else {
        let mut p = default_params();
        if let Some(path) = &cli.params {
            apply_config(&mut p, &read(path)?).map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", path.display())))?;
        }
        build_ldo(&p).map_err(|e| fail(EXIT_INVALID, e.to_string()))?
    };
    validate(&circuit).map_err(|v| fail(EXIT_INVALID, EngineError::Invalid(v).to_string()))?;
    Ok(circuit)
}

/// Stdout that tolerates a closed pipe.
fn say(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

struct Output<'a> {
    dir: &'a Path,
    plot: bool,
}

impl Output<'_> {
    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", path.display())))?;
        say(&format!("wrote {}\n", path.display()));
        Ok(())
    }

    /// CSV of the table, plus one chart per column after the first.
    fn table(&self, stem: &str, table: &Table) -> Result<(), Failure> {
        self.write(&format!("{stem}.csv"), &table.to_csv())?;
        if !self.plot {
            return Ok(());
        }
        let x_label = &table.headers[0];
        let x: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
        for (j, y_label) in table.headers.iter().enumerate().skip(1) {
            let y: Vec<f64> = table.rows.iter().map(|r| r[j]).collect();
            let title = strip_unit(y_label);
            let axes = if x_label.starts_with("frequency") {
                Axes::log_x(x_label, y_label)
            } else {
                Axes::linear(x_label, y_label)
            };
            match emit_svg(&Trace::new(title, x.clone(), y), &axes) {
                Ok(doc) => self.write(&format!("{stem}_{}.svg", file_stem(title)), &doc)?,
                Err(e) => eprintln!("warning: {e}"),
            }
        }
        Ok(())
    }
}

fn strip_unit(header: &str) -> &str {
    match header.rfind(" (") {
        Some(k) if header.ends_with(')') => &header[..k],
        _ => header,
    }
}

/// Lower-case alphanumerics joined by single underscores.
fn file_stem(text: &str) -> String {
    let mut s = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.is_empty() && !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_end_matches('_').to_string()
}

fn default_probes(circuit: &Circuit) -> Vec<String> {
    if circuit.probes.is_empty() {
        circuit.nodes().into_iter().filter(|n| n != "0").map(|n| format!("v({n})")).collect()
    } else {
        circuit.probes.iter().map(|(a, _)| a.clone()).collect()
    }
}

fn execute(cli: &Cli) -> Result<i32, Failure> {
    let circuit = load_circuit(cli)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", cli.out.display())))?;
    let out = Output { dir: &cli.out, plot: cli.plot };
    let sim = Simulator::default();
    match &cli.command {
        Command::Op => op(&sim, &circuit, &out),
        Command::Dc { sweep, log, probes } => dc(&sim, &circuit, &out, sweep, *log, probes),
        Command::Ac { from, probes, fstart, fstop, ppd } => ac(&sim, &circuit, &out, from, probes, *fstart, *fstop, *ppd),
        Command::Tran { tstop, dt, probes } => tran(&sim, &circuit, &out, *tstop, *dt, probes),
        Command::Char { spec } => characterize(&sim, &circuit, &out, *spec),
        Command::Report { targets } => report(&sim, &circuit, &out, targets.as_deref()),
    }
}

fn op(sim: &Simulator, circuit: &Circuit, out: &Output) -> Result<i32, Failure> {
    let op = sim.dc_operating_point(circuit)?;
    let mut headers = Vec::new();
    let mut row = Vec::new();
    for (n, v) in op.nodes().iter().zip(&op.voltages) {
        headers.push(format!("v({n}) (V)"));
        row.push(*v);
    }
    for e in &op.elements {
        headers.push(format!("i({}) (A)", e.name));
        row.push(e.current);
    }
    let mut text = String::new();
    for (h, v) in headers.iter().zip(&row) {
        let _ = writeln!(text, "{:<24} {v:.6e}", h);
    }
    say(&text);
    out.write("op.csv", &Table { headers, rows: vec![row] }.to_csv())?;
    Ok(EXIT_OK)
}

fn dc(
    sim: &Simulator,
    circuit: &Circuit,
    out: &Output,
    sweep: &[String],
    log: bool,
    probes: &[String],
) -> Result<i32, Failure> {
    let usage = |m: String| fail(EXIT_USAGE, m);
    let start = number(&sweep[1]).map_err(usage)?;
    let stop = number(&sweep[2]).map_err(usage)?;
    let points: usize = sweep[3].parse().map_err(|_| usage(format!("`{}` is not a point count", sweep[3])))?;
    let name = &sweep[0];
    let target = if name.eq_ignore_ascii_case("temp") || name.eq_ignore_ascii_case("temperature") {
        SweepTarget::Temperature
    } else {
        let e = circuit.element(name).ok_or_else(|| fail(EXIT_INVALID, format!("no element `{name}` to sweep")))?;
        if e.kind.is_source() {
            SweepTarget::Source(e.name.clone())
        } else {
            SweepTarget::Parameter(e.name.clone())
        }
    };
    let spec = if log { SweepSpec::log(target, start, stop, points) } else { SweepSpec::linear(target, start, stop, points) };
    let probes = if probes.is_empty() { default_probes(circuit) } else { probes.to_vec() };
    let refs: Vec<&str> = probes.iter().map(String::as_str).collect();
    let trace = sim.dc_sweep(circuit, &spec)?;
    if let Some(op) = trace.points.iter().find_map(|p| p.op.as_ref()) {
        if let Some(p) = refs.iter().find(|p| op.value(p).is_none()) {
            return Err(EngineError::UnknownProbe(p.to_string()).into());
        }
    }
    out.table("dc", &trace.table(&refs))?;
    let failed: Vec<&ldo_bench::engine::SweepPoint> = trace.points.iter().filter(|p| !p.converged()).collect();
    if let Some(first) = failed.first() {
        eprintln!(
            "error: {} of {} points did not converge; first at {} = {}: {}",
            failed.len(),
            trace.points.len(),
            trace.label,
            first.value,
            first.error.as_deref().unwrap_or("")
        );
        return Ok(EXIT_SOLVER);
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn ac(
    sim: &Simulator,
    circuit: &Circuit,
    out: &Output,
    from: &str,
    probes: &[String],
    fstart: f64,
    fstop: f64,
    ppd: usize,
) -> Result<i32, Failure> {
    if !(fstart > 0.0 && fstop > fstart && ppd > 0) {
        return Err(fail(EXIT_USAGE, "need 0 < --fstart < --fstop and --ppd >= 1"));
    }
    let op = sim.dc_operating_point(circuit)?;
    let refs: Vec<&str> = probes.iter().map(String::as_str).collect();
    let resp = sim.ac_analysis(circuit, &op, &log_grid(fstart, fstop, ppd), from, &refs)?;
    out.table("ac", &resp.table())?;
    Ok(EXIT_OK)
}

fn tran(
    sim: &Simulator,
    circuit: &Circuit,
    out: &Output,
    t_stop: f64,
    dt: Option<f64>,
    probes: &[String],
) -> Result<i32, Failure> {
    if !(t_stop > 0.0) || dt.is_some_and(|d| !(d > 0.0)) {
        return Err(fail(EXIT_USAGE, "--tstop and --dt must be positive"));
    }
    let policy = dt.map_or_else(StepPolicy::default, StepPolicy::Fixed);
    let probes = if probes.is_empty() { default_probes(circuit) } else { probes.to_vec() };
    let refs: Vec<&str> = probes.iter().map(String::as_str).collect();
    let tr = sim.transient(circuit, t_stop, &policy)?;
    let table = tr.table(&refs).ok_or_else(|| {
        let bad = refs.iter().find(|p| tr.signal(p).is_none()).unwrap_or(&"");
        Failure::from(EngineError::UnknownProbe(bad.to_string()))
    })?;
    out.table("tran", &table)?;
    Ok(EXIT_OK)
}

fn characterize(sim: &Simulator, circuit: &Circuit, out: &Output, spec: Choice) -> Result<i32, Failure> {
    let ids = match spec {
        Choice::All => SpecId::ALL.to_vec(),
        Choice::One(id) => vec![id],
    };
    let defaults = charlab::default_targets();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["spec_id", "measured", "unit", "conditions", "diagnostic"];
    w.write_record(header).expect("in-memory write");
    let mut code = EXIT_OK;
    for id in ids {
        let (conditions, unit) = match defaults.iter().find(|t| t.id == id) {
            Some(t) => (t.conditions.clone(), t.base_unit()),
            None => (Conditions::default(), id.units()[0]),
        };
        match measure_spec(sim, circuit, id, &conditions, unit) {
            Ok((value, trace)) => {
                say(&format!("{:<14} {value:.6e} {unit}\n", id.as_str()));
                w.write_record([id.as_str(), &format_value(value), unit, &conditions.text, ""]).expect("in-memory write");
                out.table(id.as_str(), &trace)?;
            }
            Err(e) => {
                let f = Failure::from(e);
                eprintln!("error: {id}: {}", f.message);
                w.write_record([id.as_str(), "", unit, &conditions.text, &f.message]).expect("in-memory write");
                code = code.max(f.code);
            }
        }
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    out.write("char.csv", &csv)?;
    Ok(code)
}

fn report(sim: &Simulator, circuit: &Circuit, out: &Output, targets: Option<&Path>) -> Result<i32, Failure> {
    let (text, origin) = match targets {
        Some(p) => (read(p)?, p.display().to_string()),
        None => (charlab::DEFAULT_TARGETS.to_string(), "built-in targets".to_string()),
    };
    let targets = charlab::parse_targets(&text).map_err(|e| fail(EXIT_INVALID, format!("{origin}: {e}")))?;
    let report = charlab::run_compliance(sim, circuit, &targets);
    say(&report.to_table());
    out.write("report.csv", &report.to_csv())?;
    for r in &report.results {
        if let Some(trace) = &r.trace {
            out.table(r.id().as_str(), trace)?;
        }
    }
    Ok(if report.all_pass() { EXIT_OK } else { EXIT_COMPLIANCE })
}
