//! Element models.
//!
//! Every element the engine knows about is described by an [`ElementKind`].
//! The nonlinear ones expose their large-signal equations and analytic
//! partial derivatives here so the engine can stamp them without knowing
//! anything about the device physics.

use thiserror::Error;

use crate::netlist::Waveform;

/// Reference temperature for temperature coefficients, in °C.
pub const T_NOMINAL: f64 = 27.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("{param} must be {requirement}, got {value}")]
    OutOfRange {
        param: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

fn require(ok: bool, param: &'static str, requirement: &'static str, value: f64) -> Result<(), DeviceError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(DeviceError::OutOfRange { param, requirement, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    N,
    P,
}

/// Level-1 square-law transistor parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosfetParams {
    pub polarity: Polarity,
    /// Process transconductance times aspect ratio, A/V².
    pub beta: f64,
    /// Threshold voltage magnitude, V.
    pub vt: f64,
    /// Channel-length modulation, 1/V.
    pub lambda: f64,
}

impl MosfetParams {
    pub fn new(polarity: Polarity, beta: f64, vt: f64, lambda: f64) -> Result<Self, DeviceError> {
        require(beta > 0.0, "beta", "> 0", beta)?;
        require(true, "vt", "finite", vt)?;
        require(lambda >= 0.0, "lambda", ">= 0", lambda)?;
        Ok(Self { polarity, beta, vt, lambda })
    }
}

/// Operating region of a square-law device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Cutoff,
    Triode,
    Saturation,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Cutoff => "cutoff",
            Region::Triode => "triode",
            Region::Saturation => "saturation",
        }
    }
}

pub fn mosfet_region(p: &MosfetParams, v_gs: f64, v_ds: f64) -> Region {
    let vov = v_gs - p.vt;
    if vov <= 0.0 {
        Region::Cutoff
    } else if v_ds < vov {
        Region::Triode
    } else {
        Region::Saturation
    }
}

/// Drain current for forward operation (`v_ds >= 0`).
///
/// For P-type devices the arguments are the source-referenced magnitudes
/// `v_sg` and `v_sd` and the result is the source-to-drain current.
/// The `(1 + lambda * v_ds)` factor multiplies both the triode and the
/// saturation expressions so the current is C¹ across the boundary.
pub fn mosfet_current(p: &MosfetParams, v_gs: f64, v_ds: f64) -> f64 {
    let vov = v_gs - p.vt;
    let clm = 1.0 + p.lambda * v_ds;
    match mosfet_region(p, v_gs, v_ds) {
        Region::Cutoff => 0.0,
        Region::Triode => p.beta * (vov * v_ds - 0.5 * v_ds * v_ds) * clm,
        Region::Saturation => 0.5 * p.beta * vov * vov * clm,
    }
}

/// Analytic `(g_m, g_ds)` of [`mosfet_current`].
pub fn mosfet_small_signal(p: &MosfetParams, v_gs: f64, v_ds: f64) -> (f64, f64) {
    let vov = v_gs - p.vt;
    let clm = 1.0 + p.lambda * v_ds;
    match mosfet_region(p, v_gs, v_ds) {
        Region::Cutoff => (0.0, 0.0),
        Region::Triode => {
            let core = vov * v_ds - 0.5 * v_ds * v_ds;
            let gm = p.beta * v_ds * clm;
            let gds = p.beta * (vov - v_ds) * clm + p.beta * core * p.lambda;
            (gm, gds)
        }
        Region::Saturation => {
            let gm = p.beta * vov * clm;
            let gds = 0.5 * p.beta * vov * vov * p.lambda;
            (gm, gds)
        }
    }
}

/// Single-pole two-stage error amplifier macromodel.
///
/// The output stage hangs below its rail terminal: with differential input
/// `vd = v(inp) - v(inn) + v_os(T)` the output settles to
/// `v(rail) - clamp(a_dc * vd, swing_min, swing_max)` through `r_out`.
/// The clamp bounds describe how far below the rail the output can be
/// pulled, so `swing_min` may be negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorAmpParams {
    pub a_dc: f64,
    pub gbw: f64,
    pub r_out: f64,
    pub v_os: f64,
    /// Offset drift, V/°C, referred to [`T_NOMINAL`].
    pub v_os_tc: f64,
    pub swing_min: f64,
    pub swing_max: f64,
}

impl ErrorAmpParams {
    pub fn new(
        a_dc: f64,
        gbw: f64,
        r_out: f64,
        v_os: f64,
        v_os_tc: f64,
        swing_min: f64,
        swing_max: f64,
    ) -> Result<Self, DeviceError> {
        require(a_dc > 1.0, "a_dc", "> 1", a_dc)?;
        require(gbw > 0.0, "gbw", "> 0", gbw)?;
        require(r_out > 0.0, "r_out", "> 0", r_out)?;
        require(true, "v_os", "finite", v_os)?;
        require(true, "v_os_tc", "finite", v_os_tc)?;
        require(swing_max > swing_min, "swing_max", "> swing_min", swing_max)?;
        require(true, "swing_min", "finite", swing_min)?;
        Ok(Self { a_dc, gbw, r_out, v_os, v_os_tc, swing_min, swing_max })
    }

    pub fn pole_hz(&self) -> f64 {
        self.gbw / self.a_dc
    }

    pub fn offset_at(&self, temperature: f64) -> f64 {
        self.v_os + self.v_os_tc * (temperature - T_NOMINAL)
    }

    /// Open-loop complex gain magnitude of the linear model at `f` Hz.
    pub fn gain_magnitude(&self, f: f64) -> f64 {
        self.a_dc / (1.0 + (f / self.pole_hz()).powi(2)).sqrt()
    }
}

/// Width of the rounded corners of the output clamp, V.
pub const CLAMP_SOFTNESS: f64 = 0.01;

/// Foldback current limiter.
///
/// Placed in series with the pass device; `sense` is the regulated output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterParams {
    pub i_max: f64,
    pub i_sc: f64,
    pub v_nom: f64,
    /// Conductance of the current-sampling path below the limit, S.
    pub g_on: f64,
}

impl LimiterParams {
    pub const DEFAULT_G_ON: f64 = 1000.0;

    pub fn new(i_max: f64, i_sc: f64, v_nom: f64) -> Result<Self, DeviceError> {
        Self::with_conductance(i_max, i_sc, v_nom, Self::DEFAULT_G_ON)
    }

    pub fn with_conductance(i_max: f64, i_sc: f64, v_nom: f64, g_on: f64) -> Result<Self, DeviceError> {
        require(i_sc > 0.0, "i_sc", "> 0", i_sc)?;
        require(i_max > i_sc, "i_max", "> i_sc", i_max)?;
        require(v_nom > 0.0, "v_nom", "> 0", v_nom)?;
        require(g_on > 0.0, "g_on", "> 0", g_on)?;
        Ok(Self { i_max, i_sc, v_nom, g_on })
    }
}

/// Maximum current the limiter lets through at output voltage `v_out`.
pub fn limiter_current(p: &LimiterParams, v_out: f64) -> f64 {
    p.i_sc + (p.i_max - p.i_sc) * (v_out / p.v_nom).clamp(0.0, 1.0)
}

/// Sharpness exponent of the limiter knee.
const KNEE_ORDER: i32 = 8;

/// Normalized drive above which the limiter counts as engaged. At this
/// point the conducted current is within 2e-5 of the limit.
pub const LIMITER_ENGAGED_DRIVE: f64 = 3.0;

/// Conduction of the limiter element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterConduction {
    pub current: f64,
    /// ∂i/∂v_ab.
    pub g_ab: f64,
    /// ∂i/∂v_sense.
    pub g_sense: f64,
    /// Normalized drive `g_on * v_ab / i_lim`.
    pub drive: f64,
    pub limit: f64,
}

/// Current through the limiter for a drop `v_ab` at sense voltage `v_sense`.
///
/// Below the limit it is a `1/g_on` resistor; above, the current saturates
/// at [`limiter_current`] through the knee `x / (1 + |x|^8)^(1/8)`.
pub fn limiter_conduction(p: &LimiterParams, v_ab: f64, v_sense: f64) -> LimiterConduction {
    let limit = limiter_current(p, v_sense);
    let dlimit = if v_sense > 0.0 && v_sense < p.v_nom {
        (p.i_max - p.i_sc) / p.v_nom
    } else {
        0.0
    };
    let x = p.g_on * v_ab / limit;
    let n = KNEE_ORDER as f64;
    let ax = x.abs();
    // (1 + |x|^n)^(1/n), computed without overflow for large drive
    let (root, dphi) = if ax > 1e6 {
        (ax, 0.0)
    } else {
        let base = 1.0 + ax.powi(KNEE_ORDER);
        (base.powf(1.0 / n), base.powf(-1.0 / n - 1.0))
    };
    let phi = x / root;
    let current = limit * phi;
    let g_ab = dphi * p.g_on;
    // i = L * phi(g v / L)  =>  di/dL = phi - x * phi'
    let g_sense = (phi - x * dphi) * dlimit;
    LimiterConduction { current, g_ab, g_sense, drive: x, limit }
}

/// Power-on-reset comparator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PorParams {
    pub v_th: f64,
    pub hysteresis: f64,
}

impl PorParams {
    pub fn new(v_th: f64, hysteresis: f64) -> Result<Self, DeviceError> {
        require(true, "v_th", "finite", v_th)?;
        require(hysteresis >= 0.0, "hysteresis", ">= 0", hysteresis)?;
        Ok(Self { v_th, hysteresis })
    }

    /// Trip point given the latched output state.
    pub fn threshold(&self, latched_high: bool) -> f64 {
        if latched_high {
            self.v_th - 0.5 * self.hysteresis
        } else {
            self.v_th + 0.5 * self.hysteresis
        }
    }
}

/// Transition width of comparator and switch controls, V.
pub const LOGIC_SOFTNESS: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveLevel {
    High,
    Low,
}

/// Voltage-controlled switch. With `ActiveLevel::Low` it models a PMOS
/// pull-up that conducts while its control input is below threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchParams {
    pub threshold: f64,
    pub active: ActiveLevel,
    pub r_on: f64,
}

impl SwitchParams {
    pub fn new(threshold: f64, active: ActiveLevel, r_on: f64) -> Result<Self, DeviceError> {
        require(true, "threshold", "finite", threshold)?;
        require(r_on > 0.0, "r_on", "> 0", r_on)?;
        Ok(Self { threshold, active, r_on })
    }

    /// Conductance and its derivative with respect to the control voltage.
    pub fn conductance(&self, v_ctrl: f64) -> (f64, f64) {
        let sign = match self.active {
            ActiveLevel::High => 1.0,
            ActiveLevel::Low => -1.0,
        };
        let (s, ds) = logistic((v_ctrl - self.threshold) * sign / LOGIC_SOFTNESS);
        let g_on = 1.0 / self.r_on;
        (g_on * s, g_on * ds * sign / LOGIC_SOFTNESS)
    }
}

/// Closed set of element models.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor { resistance: f64 },
    /// Capacitor with series ESR.
    Capacitor { capacitance: f64, esr: f64 },
    /// `tc` is a linear temperature coefficient (1/°C) on the source level.
    VoltageSource { waveform: Waveform, tc: f64 },
    CurrentSource { waveform: Waveform },
    Mosfet(MosfetParams),
    Vccs { gm: f64 },
    ErrorAmp(ErrorAmpParams),
    CurrentLimiter(LimiterParams),
    PorComparator(PorParams),
    EnableSwitch(SwitchParams),
}

impl ElementKind {
    pub fn resistor(resistance: f64) -> Result<Self, DeviceError> {
        require(resistance > 0.0, "resistance", "> 0", resistance)?;
        Ok(ElementKind::Resistor { resistance })
    }

    pub fn capacitor(capacitance: f64, esr: f64) -> Result<Self, DeviceError> {
        require(capacitance > 0.0, "capacitance", "> 0", capacitance)?;
        require(esr >= 0.0, "esr", ">= 0", esr)?;
        Ok(ElementKind::Capacitor { capacitance, esr })
    }

    pub fn vccs(gm: f64) -> Result<Self, DeviceError> {
        require(true, "gm", "finite", gm)?;
        Ok(ElementKind::Vccs { gm })
    }

    /// Number of external terminals.
    pub fn terminal_count(&self) -> usize {
        match self {
            ElementKind::Resistor { .. }
            | ElementKind::Capacitor { .. }
            | ElementKind::VoltageSource { .. }
            | ElementKind::CurrentSource { .. } => 2,
            ElementKind::Mosfet(_)
            | ElementKind::CurrentLimiter(_)
            | ElementKind::PorComparator(_)
            | ElementKind::EnableSwitch(_) => 3,
            ElementKind::Vccs { .. } | ElementKind::ErrorAmp(_) => 4,
        }
    }

    pub fn is_nonlinear(&self) -> bool {
        matches!(
            self,
            ElementKind::Mosfet(_)
                | ElementKind::ErrorAmp(_)
                | ElementKind::CurrentLimiter(_)
                | ElementKind::PorComparator(_)
                | ElementKind::EnableSwitch(_)
        )
    }

    /// Independent voltage or current source.
    pub fn is_source(&self) -> bool {
        matches!(self, ElementKind::VoltageSource { .. } | ElementKind::CurrentSource { .. })
    }
}

/// Logistic step and its derivative.
pub(crate) fn logistic(z: f64) -> (f64, f64) {
    let z = z.clamp(-700.0, 700.0);
    let s = 1.0 / (1.0 + (-z).exp());
    (s, s * (1.0 - s))
}

fn softplus(z: f64) -> (f64, f64) {
    // value and derivative of ln(1 + e^z)
    let (s, _) = logistic(z);
    let v = if z > 30.0 { z } else { z.exp().ln_1p() };
    (v, s)
}

/// C∞ clamp of `x` to `[lo, hi]` with corners rounded over `w`.
pub(crate) fn soft_clamp(x: f64, lo: f64, hi: f64, w: f64) -> (f64, f64) {
    let (a, da) = softplus((x - lo) / w);
    let (b, db) = softplus((x - hi) / w);
    (lo + w * (a - b), da - db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nmos(lambda: f64) -> MosfetParams {
        MosfetParams::new(Polarity::N, 200e-6, 0.5, lambda).unwrap()
    }

    #[test]
    fn cutoff_conducts_nothing() {
        assert_eq!(mosfet_current(&nmos(0.0), 0.4, 1.0), 0.0);
        assert_eq!(mosfet_small_signal(&nmos(0.0), 0.4, 1.0), (0.0, 0.0));
    }

    #[test]
    fn saturation_closed_form() {
        let i = mosfet_current(&nmos(0.0), 1.5, 2.0);
        assert!((i - 100e-6).abs() < 1e-15);
        let (gm, gds) = mosfet_small_signal(&nmos(0.0), 1.5, 2.0);
        assert!((gm - 200e-6).abs() < 1e-15);
        assert_eq!(gds, 0.0);
    }

    #[test]
    fn branches_agree_at_boundary() {
        let p = nmos(0.07);
        let vov = 0.8;
        let v_ds = vov;
        let clm = 1.0 + p.lambda * v_ds;
        let triode = p.beta * (vov * v_ds - 0.5 * v_ds * v_ds) * clm;
        let sat = 0.5 * p.beta * vov * vov * clm;
        assert!((triode - sat).abs() < 1e-18);
        let below = mosfet_current(&p, p.vt + vov, v_ds - 1e-9);
        let above = mosfet_current(&p, p.vt + vov, v_ds + 1e-9);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn limiter_law_points() {
        let p = LimiterParams::new(0.1, 0.03, 2.4).unwrap();
        assert!((limiter_current(&p, 2.4) - 0.1).abs() < 1e-15);
        assert!((limiter_current(&p, 0.0) - 0.03).abs() < 1e-15);
        assert!((limiter_current(&p, 1.2) - 0.065).abs() < 1e-15);
        assert!((limiter_current(&p, 5.0) - 0.1).abs() < 1e-15);
        assert!((limiter_current(&p, -1.0) - 0.03).abs() < 1e-15);
    }

    #[test]
    fn limiter_conduction_is_resistive_below_limit() {
        let p = LimiterParams::new(0.1, 0.03, 2.4).unwrap();
        let c = limiter_conduction(&p, 10e-6, 2.4);
        assert!((c.current / (10e-6 * p.g_on) - 1.0).abs() < 1e-8);
        let deep = limiter_conduction(&p, 1.0, 2.4);
        assert!(deep.drive > LIMITER_ENGAGED_DRIVE);
        assert!((deep.current - 0.1).abs() < 1e-9);
    }

    #[test]
    fn limiter_derivatives_match_finite_differences() {
        let p = LimiterParams::new(0.1, 0.03, 2.4).unwrap();
        for &(v, s) in &[(1e-4, 2.5), (1.3e-4, 1.7), (5e-4, 0.9), (-2e-4, 2.0)] {
            let c = limiter_conduction(&p, v, s);
            let h = 1e-9;
            let fd_ab = (limiter_conduction(&p, v + h, s).current - limiter_conduction(&p, v - h, s).current) / (2.0 * h);
            let h2 = 1e-6;
            let fd_s = (limiter_conduction(&p, v, s + h2).current - limiter_conduction(&p, v, s - h2).current) / (2.0 * h2);
            assert!((fd_ab - c.g_ab).abs() <= 1e-5 * c.g_ab.abs().max(1.0), "{fd_ab} vs {}", c.g_ab);
            assert!((fd_s - c.g_sense).abs() <= 1e-6, "{fd_s} vs {}", c.g_sense);
        }
    }

    #[test]
    fn constructors_reject_out_of_range() {
        assert!(ElementKind::resistor(0.0).is_err());
        assert!(ElementKind::capacitor(1e-6, -0.1).is_err());
        assert!(MosfetParams::new(Polarity::P, -1.0, 0.5, 0.0).is_err());
        assert!(MosfetParams::new(Polarity::P, 1.0, 0.5, -0.1).is_err());
        assert!(ErrorAmpParams::new(1.0, 1e6, 100.0, 0.0, 0.0, -1.0, 1.0).is_err());
        assert!(ErrorAmpParams::new(100.0, 0.0, 100.0, 0.0, 0.0, -1.0, 1.0).is_err());
        assert!(LimiterParams::new(0.03, 0.1, 2.4).is_err());
        assert!(LimiterParams::new(0.1, 0.0, 2.4).is_err());
        assert!(PorParams::new(2.35, -0.1).is_err());
        assert!(SwitchParams::new(0.9, ActiveLevel::High, 0.0).is_err());
        assert!(ElementKind::resistor(f64::NAN).is_err());
    }

    #[test]
    fn error_amp_unity_at_gbw() {
        let ea = ErrorAmpParams::new(1000.0, 1e6, 100.0, 0.0, 0.0, -1.0, 1.0).unwrap();
        assert!((ea.gain_magnitude(ea.gbw) - 1.0).abs() < 0.01);
        assert!((ea.pole_hz() - 1e3).abs() < 1e-9);
    }

    #[test]
    fn soft_clamp_is_linear_inside() {
        let (v, d) = soft_clamp(0.3, -0.5, 2.0, CLAMP_SOFTNESS);
        assert!((v - 0.3).abs() < 1e-12);
        assert!((d - 1.0).abs() < 1e-12);
        let (v, _) = soft_clamp(50.0, -0.5, 2.0, CLAMP_SOFTNESS);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn switch_levels() {
        let sw = SwitchParams::new(0.9, ActiveLevel::Low, 1.0).unwrap();
        assert!((sw.conductance(0.0).0 - 1.0).abs() < 1e-12);
        assert!(sw.conductance(1.8).0 < 1e-100);
    }
}
