//! Line charts as standalone SVG 1.1 documents.
//!
//! Output is a pure function of the input: coordinates are printed with a
//! fixed number of decimals and nothing depends on time or hashing.
//!
//! ```
//! use ldo_bench_cli::svg::{emit_svg, Axes, Trace};
//!
//! let t = Trace::new("v(vout)", vec![0.0, 1.0], vec![1.8, 1.79]);
//! let doc = emit_svg(&t, &Axes::linear("vin (V)", "v(vout) (V)")).unwrap();
//! assert_eq!(doc.matches("<polyline").count(), 1);
//! ```

use std::fmt::Write as _;

use thiserror::Error;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Chart title, normally the probe name.
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Trace {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { name: name.into(), x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    /// Base-10; ticks at decades only.
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    /// Axis labels, units included.
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
}

impl Axes {
    pub fn linear(x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { x_label: x_label.into(), y_label: y_label.into(), x_scale: Scale::Linear }
    }

    pub fn log_x(x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { x_label: x_label.into(), y_label: y_label.into(), x_scale: Scale::Log }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvgError {
    #[error("trace `{0}` has no finite points")]
    Empty(String),
    #[error("trace `{name}`: {x} x values but {y} y values")]
    Length { name: String, x: usize, y: usize },
}

/// Decades `10^k` inside `[lo, hi]`.
pub fn decade_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.log10().ceil() as i32, hi.log10().floor() as i32);
    (a..=b).map(|k| 10f64.powi(k)).collect()
}

/// Round steps of 1, 2 or 5 times a power of ten, about five per axis.
pub fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step((hi - lo) / 5.0);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r < 1.5 {
        1.0
    } else if r < 3.0 {
        2.0
    } else if r < 7.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn linear_label(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.digits$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn decade_label(v: f64) -> String {
    let k = v.log10().round() as i32;
    if (0..=3).contains(&k) {
        format!("{}", 10i32.pow(k as u32))
    } else if (-3..0).contains(&k) {
        format!("{v:.prec$}", prec = (-k) as usize)
    } else {
        format!("1e{k}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

/// Render one trace. Non-finite points, and non-positive x on a log axis,
/// are skipped.
pub fn emit_svg(trace: &Trace, axes: &Axes) -> Result<String, SvgError> {
    if trace.x.len() != trace.y.len() {
        return Err(SvgError::Length { name: trace.name.clone(), x: trace.x.len(), y: trace.y.len() });
    }
    let log = axes.x_scale == Scale::Log;
    let pts: Vec<(f64, f64)> = trace
        .x
        .iter()
        .zip(&trace.y)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log || **x > 0.0))
        .map(|(x, y)| (*x, *y))
        .collect();
    if pts.is_empty() {
        return Err(SvgError::Empty(trace.name.clone()));
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        pts.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let (x_min, x_max) = fold(|p| p.0);
    let (y_lo, y_hi) = padded(fold(|p| p.1).0, fold(|p| p.1).1);

    let (x_lo, x_hi, x_ticks) = if log {
        let lo = 10f64.powf(x_min.log10().floor());
        let mut hi = 10f64.powf(x_max.log10().ceil());
        if hi <= lo {
            hi = lo * 10.0;
        }
        (lo.log10(), hi.log10(), decade_ticks(lo, hi))
    } else {
        let (lo, hi) = if x_max > x_min { (x_min, x_max) } else { padded(x_min, x_max) };
        (lo, hi, linear_ticks(lo, hi))
    };
    let y_ticks = linear_ticks(y_lo, y_hi);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| {
        let u = if log { x.log10() } else { x };
        LEFT + (u - x_lo) / (x_hi - x_lo) * pw
    };
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&trace.name)
    );
    let _ = writeln!(s, r##"<g stroke="#dddddd" stroke-width="1">"##);
    for &t in &x_ticks {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}"/>"#, TOP + ph);
    }
    for &t in &y_ticks {
        let y = sy(t);
        let _ = writeln!(s, r#"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#, LEFT + pw);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black" stroke-width="1"/>"#
    );

    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#);
    let x_step = if x_ticks.len() > 1 { x_ticks[1] - x_ticks[0] } else { 1.0 };
    for &t in &x_ticks {
        let label = if log { decade_label(t) } else { linear_label(t, x_step) };
        let _ = writeln!(
            s,
            r#"<text class="xtick" x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            sx(t),
            TOP + ph + 16.0
        );
    }
    let y_step = if y_ticks.len() > 1 { y_ticks[1] - y_ticks[0] } else { 1.0 };
    for &t in &y_ticks {
        let _ = writeln!(
            s,
            r#"<text class="ytick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(t) + 4.0,
            linear_label(t, y_step)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&axes.y_label)
    );

    let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{}"/>"##,
        coords.join(" ")
    );
    let _ = writeln!(s, "</svg>");
    Ok(s)
}
