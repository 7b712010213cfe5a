//! End-to-end behavioral modeling of nonlinear RF devices from
//! uniform-noise training data.
//!
//! The crate covers the whole workflow: stimulus generation ([`siggen`]),
//! a synthetic device with analytic oracles ([`dutsim`]), a simulated
//! acquisition rig with CSV artifacts ([`testbench`]), preprocessing into
//! windowed datasets ([`pipeline`]), from-scratch dense networks and
//! training ([`neuralnet`]), and FFT metrology applied identically to
//! measured and predicted responses ([`metrics`]).

pub mod dutsim;
pub mod error;
pub mod metrics;
pub mod neuralnet;
pub mod pipeline;
pub mod seed;
pub mod siggen;
pub mod testbench;

pub use error::{Error, Result};
pub use siggen::Waveform;
