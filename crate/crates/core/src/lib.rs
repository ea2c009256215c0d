//! Four-level Lindblad simulator for three-photon STIRAP between the metastable
//! D states of alkaline-earth-like ions.
//!
//! Basis ordering is `(S, P, D, Q)` throughout. Internal units are rad/us for
//! angular frequencies and us for times; configuration files quote Rabi
//! frequencies and detunings as `Omega / 2 pi` in MHz and are converted once on
//! load.

// `!(x > 0.0)` is used on purpose so NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dressed;
pub mod error;
pub mod model;
pub mod output;
pub mod presets;
pub mod propagator;
pub mod pulse;
pub mod qcore;
pub mod scenarios;

pub use error::{Error, Result};

/// rad/us per MHz of `Omega / 2 pi`.
pub const MHZ: f64 = 2.0 * std::f64::consts::PI;
