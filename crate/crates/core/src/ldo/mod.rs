//! The 100 mA regulator as a [`Circuit`].
//!
//! ```
//! use ldo_bench::engine::dc_operating_point;
//! use ldo_bench::ldo::{build_ldo, default_params};
//!
//! let c = build_ldo(&default_params()).unwrap();
//! let op = dc_operating_point(&c).unwrap();
//! assert!((op.value("vout").unwrap() - 2.4).abs() < 5e-3);
//! ```
//!
//! Topology: the error amplifier compares `ref` against the divider tap
//! `fb` and drives the gate of the P-type pass device through the `run`
//! switch. The pass device feeds `vout` through the foldback limiter.
//! Below the power-on threshold the amplifier is disconnected and the gate
//! is pulled to ground so the output follows the supply; with `pwdnz` low
//! the gate is tied to `vin` and the output is discharged.

mod config;

use thiserror::Error;

use crate::devices::{
    ActiveLevel, DeviceError, ElementKind, ErrorAmpParams, LimiterParams, MosfetParams, Polarity, PorParams,
    SwitchParams,
};
use crate::netlist::{serialize, Circuit, Element, LoopBreak, NetlistError, Probe, Waveform};

pub use config::{apply_config, parse_config, to_config, ConfigError};

/// The frozen default parameter file.
pub const DEFAULT_CONFIG: &str = include_str!("../../data/ldo_default.conf");

/// Lowest supply at which the regulator is specified, V.
pub const V_IN_MIN: f64 = 2.6;
/// Highest specified supply, V.
pub const V_IN_MAX: f64 = 5.5;

pub const SUPPLY: &str = "VIN";
pub const ENABLE: &str = "VEN";
pub const REFERENCE: &str = "VREF";
pub const ERROR_AMP: &str = "EA";
pub const PASS: &str = "MP";
pub const LIMITER: &str = "LIM";
pub const OUTPUT_CAP: &str = "COUT";
pub const LOAD: &str = "ILOAD";
/// Source that holds the feedback input in the pinned variant.
pub const FEEDBACK_PIN: &str = "VFB";

/// Supply current split by operating mode, A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqModel {
    pub enabled: f64,
    pub below_por: f64,
    pub disabled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdoParams {
    pub v_in: f64,
    /// Level applied to `pwdnz`.
    pub v_enable: f64,
    pub logic_threshold: f64,
    pub v_out_nom: f64,
    pub v_ref: f64,
    pub v_ref_tc_ppm: f64,
    pub r1: f64,
    pub r2: f64,
    pub ea: ErrorAmpParams,
    /// Amplifier rail offset below `vin`.
    pub v_bias: f64,
    pub pass: MosfetParams,
    /// Gate to source capacitance of the pass device.
    pub c_gate: f64,
    pub ilim: LimiterParams,
    pub por: PorParams,
    pub c_out: f64,
    pub esr: f64,
    pub iq: IqModel,
    pub switch_r_on: f64,
    /// Output discharge resistance while disabled.
    pub r_discharge: f64,
    pub load: Waveform,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdoError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

impl From<DeviceError> for LdoError {
    fn from(e: DeviceError) -> Self {
        LdoError::Params(e.to_string())
    }
}

/// The frozen default set.
pub fn default_params() -> LdoParams {
    parse_config(DEFAULT_CONFIG).expect("embedded default configuration is valid")
}

impl LdoParams {
    pub(crate) fn placeholder() -> Self {
        Self {
            v_in: 0.0,
            v_enable: 0.0,
            logic_threshold: 0.0,
            v_out_nom: 0.0,
            v_ref: 0.0,
            v_ref_tc_ppm: 0.0,
            r1: 0.0,
            r2: 0.0,
            ea: ErrorAmpParams {
                a_dc: 0.0,
                gbw: 0.0,
                r_out: 0.0,
                v_os: 0.0,
                v_os_tc: 0.0,
                swing_min: 0.0,
                swing_max: 0.0,
            },
            v_bias: 0.0,
            pass: MosfetParams { polarity: Polarity::P, beta: 0.0, vt: 0.0, lambda: 0.0 },
            c_gate: 0.0,
            ilim: LimiterParams { i_max: 0.0, i_sc: 0.0, v_nom: 0.0, g_on: 0.0 },
            por: PorParams { v_th: 0.0, hysteresis: 0.0 },
            c_out: 0.0,
            esr: 0.0,
            iq: IqModel { enabled: 0.0, below_por: 0.0, disabled: 0.0 },
            switch_r_on: 0.0,
            r_discharge: 0.0,
            load: Waveform::Dc(0.0),
        }
    }

    /// Divider ratio `1 + r1/r2`.
    pub fn gain(&self) -> f64 {
        1.0 + self.r1 / self.r2
    }

    /// `v_ref * (1 + r1/r2)`.
    pub fn v_out_set(&self) -> f64 {
        self.v_ref * self.gain()
    }

    fn divider_current(&self) -> f64 {
        self.v_out_nom / (self.r1 + self.r2)
    }

    /// Transconductance of the bias element active while regulating.
    fn gm_run(&self) -> f64 {
        (self.iq.enabled - self.iq.disabled - self.divider_current()) / self.v_enable
    }

    /// Transconductance of the bias element active below the POR threshold.
    fn gm_por(&self) -> f64 {
        (self.iq.below_por - self.iq.disabled) / self.v_enable
    }

    pub fn validate(&self) -> Result<(), String> {
        let check = |ok: bool, what: String| if ok { Ok(()) } else { Err(what) };
        let e = &self.ea;
        ErrorAmpParams::new(e.a_dc, e.gbw, e.r_out, e.v_os, e.v_os_tc, e.swing_min, e.swing_max)
            .map_err(|e| format!("ea: {e}"))?;
        let p = &self.pass;
        MosfetParams::new(Polarity::P, p.beta, p.vt, p.lambda).map_err(|e| format!("pass: {e}"))?;
        check(p.polarity == Polarity::P, "pass device must be P-type".into())?;
        LimiterParams::with_conductance(self.ilim.i_max, self.ilim.i_sc, self.ilim.v_nom, self.ilim.g_on)
            .map_err(|e| format!("ilim: {e}"))?;
        PorParams::new(self.por.v_th, self.por.hysteresis).map_err(|e| format!("por: {e}"))?;
        for (name, x) in [
            ("r1", self.r1),
            ("r2", self.r2),
            ("v_ref", self.v_ref),
            ("v_out_nom", self.v_out_nom),
            ("c_out", self.c_out),
            ("c_gate", self.c_gate),
            ("switch.r_on", self.switch_r_on),
            ("r_discharge", self.r_discharge),
            ("v_in", self.v_in),
        ] {
            check(x > 0.0 && x.is_finite(), format!("{name} must be > 0, got {x}"))?;
        }
        check(self.esr >= 0.0, format!("esr must be >= 0, got {}", self.esr))?;
        check(
            self.logic_threshold > 0.0 && self.v_enable > self.logic_threshold,
            format!("v_enable ({}) must exceed logic_threshold ({}) > 0", self.v_enable, self.logic_threshold),
        )?;
        let set = self.v_out_set();
        check(
            (set - self.v_out_nom).abs() <= 1e-3 * self.v_out_nom,
            format!("v_ref * (1 + r1/r2) = {set} V differs from v_out_nom = {} V by more than 0.1%", self.v_out_nom),
        )?;
        check(
            self.por.threshold(false) < V_IN_MIN,
            format!("POR rising threshold {} V must be below {V_IN_MIN} V", self.por.threshold(false)),
        )?;
        check(self.iq.disabled >= 0.0, "iq.disabled must be >= 0".into())?;
        check(self.gm_por() >= 0.0, "iq.below_por must be >= iq.disabled".into())?;
        check(
            self.gm_run() >= 0.0,
            format!(
                "iq.enabled must cover iq.disabled plus the divider current {} A",
                self.divider_current()
            ),
        )?;
        self.load.validate().map_err(|e| format!("load: {e}"))?;
        Ok(())
    }
}

/// Structural variants used by the measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Standard,
    /// Pass device drives the output directly.
    WithoutLimiter,
    /// The amplifier's inverting input is held at `v_fb` instead of the
    /// divider tap.
    PinnedFeedback { v_fb: f64 },
}

pub fn build_ldo(params: &LdoParams) -> Result<Circuit, LdoError> {
    build_variant(params, Variant::Standard)
}

pub fn build_variant(params: &LdoParams, variant: Variant) -> Result<Circuit, LdoError> {
    params.validate().map_err(LdoError::Params)?;
    let p = params;
    let dc = |x: f64| Waveform::Dc(x);
    let sw = |active| -> Result<ElementKind, LdoError> {
        Ok(ElementKind::EnableSwitch(SwitchParams::new(p.logic_threshold, active, p.switch_r_on)?))
    };
    let mut c = Circuit::new();
    let mut add = |name: &str, nodes: &[&str], kind: ElementKind| c.add(Element::new(name, nodes, kind));

    add(SUPPLY, &["vin", "0"], ElementKind::VoltageSource { waveform: dc(p.v_in), tc: 0.0 })?;
    add(ENABLE, &["pwdnz", "0"], ElementKind::VoltageSource { waveform: dc(p.v_enable), tc: 0.0 })?;
    add(REFERENCE, &["ref", "0"], ElementKind::VoltageSource { waveform: dc(p.v_ref), tc: p.v_ref_tc_ppm * 1e-6 })?;
    add("VB1", &["vin", "vb1"], ElementKind::VoltageSource { waveform: dc(p.v_bias), tc: 0.0 })?;

    let inn = match variant {
        Variant::PinnedFeedback { v_fb } => {
            add(FEEDBACK_PIN, &["fbpin", "0"], ElementKind::VoltageSource { waveform: dc(v_fb), tc: 0.0 })?;
            "fbpin"
        }
        _ => "fb",
    };
    add(ERROR_AMP, &["ref", inn, "amp", "vb1"], ElementKind::ErrorAmp(p.ea))?;
    add("SWRUN", &["amp", "gate", "run"], sw(ActiveLevel::High)?)?;
    add("SWPD", &["gate", "vin", "pwdnz"], sw(ActiveLevel::Low)?)?;
    add("SWBYP1", &["gate", "n2", "run"], sw(ActiveLevel::Low)?)?;
    add("SWBYP2", &["n2", "0", "pwdnz"], sw(ActiveLevel::High)?)?;
    add("POR1", &["vin", "run", "pwdnz"], ElementKind::PorComparator(p.por))?;

    let drain = match variant {
        Variant::WithoutLimiter => "vout",
        _ => "pd",
    };
    add(PASS, &[drain, "gate", "vin"], ElementKind::Mosfet(p.pass))?;
    if drain != "vout" {
        add(LIMITER, &["pd", "vout", "vout"], ElementKind::CurrentLimiter(p.ilim))?;
    }
    add("CG", &["gate", "vin"], ElementKind::capacitor(p.c_gate, 0.0)?)?;

    add("R1", &["vout", "fb"], ElementKind::resistor(p.r1)?)?;
    add("R2", &["fb", "nb"], ElementKind::resistor(p.r2)?)?;
    add("SWDIV", &["nb", "0", "run"], sw(ActiveLevel::High)?)?;
    add(OUTPUT_CAP, &["vout", "0"], ElementKind::capacitor(p.c_out, p.esr)?)?;
    let discharge = SwitchParams::new(p.logic_threshold, ActiveLevel::Low, p.r_discharge)?;
    add("SWDIS", &["vout", "0", "pwdnz"], ElementKind::EnableSwitch(discharge))?;
    add(LOAD, &["vout", "0"], ElementKind::CurrentSource { waveform: p.load.clone() })?;

    add("IQ0", &["vin", "0"], ElementKind::CurrentSource { waveform: dc(p.iq.disabled) })?;
    add("GQPOR", &["vin", "0", "pwdnz", "run"], ElementKind::vccs(p.gm_por())?)?;
    add("GQRUN", &["vin", "0", "run", "0"], ElementKind::vccs(p.gm_run())?)?;

    if !matches!(variant, Variant::PinnedFeedback { .. }) {
        c.loop_break = Some(LoopBreak { element: ERROR_AMP.into(), terminal: 1 });
    }
    c.add_probe("vin", Probe::Voltage("vin".into()));
    c.add_probe("vout", Probe::Voltage("vout".into()));
    c.add_probe("iload", Probe::Current(LOAD.into()));
    c.add_probe("isupply", Probe::Current(SUPPLY.into()));
    Ok(c)
}

/// Netlist text of the standard circuit, for archival.
pub fn netlist_text(params: &LdoParams) -> Result<String, LdoError> {
    Ok(serialize(&build_ldo(params)?))
}

#[cfg(test)]
mod tests;
