//! Modeling, regulator design and simulation of a capacitor-coupled dc-dc
//! converter: one inverter feeds several rectifier stages in parallel through
//! coupling capacitors, and the stage outputs are stacked in series.

// Negated comparisons are used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaged;
pub mod closed_loop;
pub mod error;
pub mod fmt;
pub mod params;
pub mod rational;
pub mod reference;
pub mod regulator;
pub mod small_signal;
pub mod switched;
pub mod trace;
pub mod transfer;

pub use error::{Error, Result};
pub use params::{ConfigError, ConverterParams};

// The guide's snippets run as doc-tests through these modules.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/averaged.md")]
    mod averaged {}
    #[doc = include_str!("../../../book/src/small_signal.md")]
    mod small_signal {}
    #[doc = include_str!("../../../book/src/transfer_functions.md")]
    mod transfer_functions {}
    #[doc = include_str!("../../../book/src/regulator.md")]
    mod regulator {}
    #[doc = include_str!("../../../book/src/switched.md")]
    mod switched {}
    #[doc = include_str!("../../../book/src/closed_loop.md")]
    mod closed_loop {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reference.md")]
    mod reference {}
}

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}
