//! Behavioral simulation and characterization of a 100 mA low-dropout
//! regulator.
//!
//! - [`devices`]: element models and their derivatives
//! - [`netlist`]: circuit graph, text format, validation
//! - [`engine`]: DC, sweep, AC, transient and loop-gain analyses
//! - [`ldo`]: the regulator builder and its default parameters
//! - [`charlab`]: measurement procedures and spec compliance

pub mod charlab;
pub mod devices;
pub mod engine;
pub mod ldo;
pub mod netlist;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/netlist.md")]
    mod netlist {}
    #[doc = include_str!("../../../book/src/analyses.md")]
    mod analyses {}
    #[doc = include_str!("../../../book/src/regulator.md")]
    mod regulator {}
    #[doc = include_str!("../../../book/src/characterization.md")]
    mod characterization {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
