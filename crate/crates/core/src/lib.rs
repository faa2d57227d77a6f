//! Compile polynomial dynamical systems into current-mode translinear
//! netlists and simulate them at three levels of detail.
//!
//! The pipeline is [`dsl::parse_system`] → [`synth::synthesize`] →
//! [`sim::simulate_circuit`] (or [`sim::simulate_device`]), with
//! [`sim::simulate_reference`] integrating the original equations and
//! [`analysis`] comparing the results.

pub mod analysis;
pub mod blocks;
pub mod config;
pub mod dsl;
pub mod sim;
pub mod synth;
